"""Bundled demo cohort: 7 records, 4 SNP columns, 3 phenotypes.

Small enough to verify every query by hand; the golden-answer tests and the
CLI walkthrough in the README both run against it.
"""

from .encoding import Gdb, parse_gdb

DEMO_COHORT_CSV = """\
ID,SNP_1,SNP_2,SNP_3,SNP_4,Phenotype
1,AG,CC,TT,AG,Cancer A
2,AA,CC,CT,AG,Cancer B
3,AG,CT,CC,AA,Cancer A
4,AG,CC,TT,AG,Cancer C
5,AA,CC,TT,AG,Cancer B
6,AA,CC,TT,GG,Cancer A
7,AG,CT,CT,AG,Cancer B
"""


def load_demo_cohort() -> Gdb:
    return parse_gdb(DEMO_COHORT_CSV)

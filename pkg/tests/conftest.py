"""Shared fixtures: the demo cohort pipeline and a random-cohort generator."""

import random

import pytest

from privgendb.crypto import SeededRng, keygen
from privgendb.encoding import keyword_frequencies, parse_gdb
from privgendb.fixtures import load_demo_cohort
from privgendb.index import build_egdb, build_inverted_index


@pytest.fixture(scope="session")
def demo_gdb():
    return load_demo_cohort()


@pytest.fixture(scope="session")
def demo_keys():
    return keygen(rng=SeededRng(1101))


@pytest.fixture(scope="session")
def demo_iinx(demo_gdb):
    return build_inverted_index(demo_gdb)


@pytest.fixture(scope="session")
def demo_egdb(demo_keys, demo_iinx):
    return build_egdb(demo_keys, demo_iinx, SeededRng(1102))


@pytest.fixture(scope="session")
def demo_freq(demo_gdb):
    return keyword_frequencies(demo_gdb)


GENOTYPE_CHOICES = ("AA", "AG", "GG", "CC", "CT", "TT")
PHENOTYPE_POOL = ("Cancer A", "Cancer B", "Cancer C", "Diabetes", "Healthy")
GENDER_POOL = ("Male", "Female")
ETHNICITY_POOL = ("European", "East Asian", "African", "South Asian")


def random_cohort_csv(rng: random.Random, r: int, snps: int,
                      with_metadata: bool = False) -> str:
    """Random cohort CSV with 2-3 genotypes per column and 2-3 phenotypes."""
    lines = ["ID," + ",".join(f"SNP_{i + 1}" for i in range(snps)) + ",Phenotype"
             + (",Gender,Ethnicity" if with_metadata else "")]
    col_alphabets = [rng.sample(GENOTYPE_CHOICES, rng.randint(2, 3)) for _ in range(snps)]
    phenos = rng.sample(PHENOTYPE_POOL, rng.randint(2, 3))
    for rid in range(1, r + 1):
        row = [str(rid)]
        row += [rng.choice(col_alphabets[s]) for s in range(snps)]
        row.append(rng.choice(phenos))
        if with_metadata:
            row.append(rng.choice(GENDER_POOL))
            row.append(rng.choice(ETHNICITY_POOL))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def random_cohort(rng: random.Random, r: int, snps: int, with_metadata: bool = False):
    return parse_gdb(random_cohort_csv(rng, r, snps, with_metadata))

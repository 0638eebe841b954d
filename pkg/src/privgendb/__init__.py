"""Searchable symmetric encryption for genomic cohort databases.

An untrusted server stores an encrypted SNP/phenotype index and answers
count, boolean (conjunction with negation), and k'-of-k match queries
without learning keywords, record ids, or query contents beyond the
designed leakage (query type and per-counter token counts).
"""

__version__ = "0.1.0"

from .crypto import (
    AuthenticationError,
    GroupElement,
    KeySet,
    SeededRng,
    SystemRng,
    keygen,
    load_keys,
    save_keys,
)
from .encoding import (
    EncodedQuery,
    Gdb,
    GdbParseError,
    GdbRecord,
    KeywordUniverse,
    Predicate,
    Query,
    QueryError,
    encode_query,
    keyword_frequencies,
    keyword_universe,
    parse_gdb,
    parse_query,
    record_keywords,
)
from .engine import (
    Policy,
    ResultSet,
    SearchToken,
    TamperingError,
    decrypt_ids,
    generate_token,
    parse_policy,
    run_query,
    search,
    vet_count,
    vet_ids,
    vet_request,
)
from .evaluation import (
    BenchCase,
    BenchReport,
    SyntheticSpec,
    evaluate_plain,
    gen_synthetic,
    run_case,
    run_grid,
)
from .fixtures import DEMO_COHORT_CSV, load_demo_cohort
from .index import (
    BloomFilter,
    CorruptIndexError,
    Egdb,
    EgdbParams,
    IndexBuildError,
    TSet,
    build_egdb,
    build_inverted_index,
    egdb_to_bytes,
    load_egdb,
    serialize_egdb,
)

__all__ = [name for name in dir() if not name.startswith("_")]

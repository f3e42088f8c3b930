"""Machine-readable privacy certificates for services.

Issue signed P-ASSERT certificates from model-based deferred-testing evidence,
verify them, and match them against client privacy requirements.
"""

from .canonical import CanonicalizationError, canonical_bytes, from_canonical
from .certificate import (
    Asset,
    Authority,
    EvidenceBlock,
    ModelRef,
    OperationSig,
    PAssert,
    PAssertCore,
    ParamSig,
    Process,
    SignatureBlock,
    Toc,
    Toe,
    canonicalize,
    load_passert,
    save_passert,
    sign_passert,
    validate_structure,
    verify_passert,
)
from .guards import GuardEvalError, GuardParseError, eval_guard, parse_guard
from .partitions import PartitionSpec, load_partitions, parse_partitions
from .properties import (
    DEFAULT_SCHEMAS,
    WILDCARD,
    AttributeSchema,
    InvalidPropertyError,
    Ordering,
    PrivacyProperty,
    PropertyParseError,
    ProtectionGoal,
    Requirement,
    SchemaSet,
    canonical_form,
    compare,
    format_duration,
    matches,
    parse_duration,
    parse_property,
    parse_requirement,
    rank_certified,
    validate_property,
    validate_requirement,
)
from .registry import Registry
from .service import (
    DepositWithdrawalService,
    RetentionConfig,
    ServiceConfig,
    SubprocessService,
    VirtualClock,
    make_faulty,
)
from .signing import generate_signer, load_signer, load_verifier, save_signer, save_verifier
from .sts import ModelIndexes, Sts, Transition, enumerate_paths, indexes, load_sts, parse_sts, prune_to_mios
from .testgen import (
    CoverageMetrics,
    Expected,
    TestCase,
    TestEvidence,
    TestStep,
    compute_coverage,
    execute_suite,
    generate_suite,
    suite_to_bytes,
)

__version__ = "0.1.0"

import json
from pathlib import Path

import pytest

from passert import (
    DepositWithdrawalService,
    RetentionConfig,
    execute_suite,
    generate_suite,
    load_sts,
    parse_property,
)
from passert.cli import data_path
from passert.partitions import load_partitions

SESSION_TOKEN = "tok-cert-harness"

# desk-scale retention setup used wherever the 1d..1y config would be overkill
SCALED_CLAIM = (
    "Unlinkability { measure = retention, frequency = 1s, "
    "min_retention = 60s, max_retention = 600s }"
)


@pytest.fixture(scope="session")
def fig_conversation_model():
    return load_sts(data_path("deposit_withdrawal.sts"))


@pytest.fixture(scope="session")
def retention_model():
    return load_sts(data_path("retention_test.sts"))


@pytest.fixture(scope="session")
def bundled_partitions():
    return load_partitions(data_path("retention_partitions.txt"))


@pytest.fixture(scope="session")
def scaled_claim():
    return parse_property(SCALED_CLAIM)


@pytest.fixture(scope="session")
def scaled_config():
    return RetentionConfig(freq=1, min_retention=60, max_retention=600, default_rp=120)


@pytest.fixture
def service_factory(scaled_config):
    def build(variant="correct", config=None):
        return DepositWithdrawalService(
            config or scaled_config,
            users={"certlab": "cert-lab-secret"},
            sessions={SESSION_TOKEN: "certlab"},
            variant=variant,
        )

    return build


@pytest.fixture(scope="session")
def scaled_suite(retention_model, bundled_partitions, scaled_claim):
    return generate_suite(retention_model, bundled_partitions, scaled_claim, seed=11)


@pytest.fixture(scope="session")
def scaled_evidence(retention_model, bundled_partitions, scaled_claim, scaled_config):
    suite = generate_suite(retention_model, bundled_partitions, scaled_claim, seed=11)
    service = DepositWithdrawalService(scaled_config, sessions={SESSION_TOKEN: "certlab"})
    return execute_suite(suite, service, test_model=retention_model)


def write_scaled_config(path: Path, freq="1s", min_retention="60s", max_retention="600s",
                        default_rp="120s", service_id="deposit-withdrawal-sim") -> Path:
    path.write_text(
        json.dumps(
            {
                "service_id": service_id,
                "description": "scaled test instance",
                "users": [{"usr": "certlab", "pwd": "cert-lab-secret"}],
                "sessions": [{"token": SESSION_TOKEN, "user": "certlab"}],
                "retention": {
                    "freq": freq,
                    "min_retention": min_retention,
                    "max_retention": max_retention,
                    "default_rp": default_rp,
                },
            },
            indent=2,
        )
    )
    return path

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from desk import build_desk  # noqa: E402


@pytest.fixture(scope="session")
def desk():
    return build_desk()


@pytest.fixture(scope="session")
def headline(desk):
    """Per-utterance rows of the 5 dB desk evaluation, Gaussian vs super-Gaussian STSA."""
    import dataclasses

    from sgenhance.workflow import run_evaluation

    cfg = dataclasses.replace(desk.cfg, snr_list="5", presets="gauss-stsa,sg-stsa", schemes="non-mlse,nmf,dnn")
    rows, max_err = run_evaluation(desk.test_raw, desk.noises, cfg, desk.nmf, desk.dnn)
    return {"rows": rows, "max_err": max_err, "cfg": cfg}

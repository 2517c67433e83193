import time
from types import SimpleNamespace

import pytest

from symles import cli
from symles.config import RunConfig


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full desk-scale pipeline (DNS, filter, train x3, evaluate), run once.

    Takes several minutes; only the acceptance criteria that need real
    turbulence data request it.
    """
    out = tmp_path_factory.mktemp("desk")
    times = {}

    def run(stage, argv):
        start = time.perf_counter()
        code = cli.main(argv)
        times[stage] = time.perf_counter() - start
        assert code == 0, f"stage {stage} failed with exit code {code}"

    base = ["--out", str(out)]
    run("dns", ["dns", *base])
    run("filter", ["filter", *base])
    for model in ("tbnn", "gconv", "conv"):
        run(f"train_{model}", ["train", *base, "--model", model])
    run("evaluate", ["evaluate", *base])

    config = RunConfig(out_dir=str(out))
    return SimpleNamespace(out=out, times=times, config=config)

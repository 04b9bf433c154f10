import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bifid.dataset import Dataset, apply_scaling, fit_scaling
from bifid.fusion import FusionProblem

settings.register_profile("bifid", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("bifid")


def scaled(points) -> Dataset:
    ds = Dataset(np.asarray(points, dtype=float))
    return apply_scaling(ds, fit_scaling(ds))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@functools.lru_cache(maxsize=None)
def canonical_pipeline_problem(seed: int = 0):
    """Canonical clusters with centroid-selected controls, as a FusionProblem."""
    from bifid.graph import KernelSpec
    from bifid.pipeline import PipelineConfig, graph_stage, selection_stage
    from bifid.synthetic import canonical_clusters

    prob = canonical_clusters()
    cfg = PipelineConfig(kernel=KernelSpec.self_tuned(), n_select=3, K_cutoff=9, seed=seed)
    g = graph_stage(prob.low, cfg)
    sel = selection_stage(g, cfg)
    hi = apply_scaling(prob.high.take(sel.selected), g.scaling)
    return FusionProblem.build(g.low, hi, sel.selected, g.spectrum, K=9)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

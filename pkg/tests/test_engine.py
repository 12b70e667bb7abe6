import numpy as np
import pytest

from netrecon.engine import EmConfig, init_params, resolve_label_swap, run_em
from netrecon.exceptions import ContractError, ValidationError
from netrecon.models import (
    IIDParams,
    MODELS,
    MultiLevelParams,
    MultiModalParams,
    PerNodeParams,
    e_step_iid,
    profile_loglik,
)
from netrecon.obsdata import counts_from_arrays, parse_counts, parse_reports
from netrecon.synth import SynthSpec, random_pernode_params, synthesize

from oracles import random_symmetric_counts


def iid_data(seed=0, n=60, alpha=0.42, beta=0.004, rho=0.034, trials=8):
    return synthesize(SynthSpec(n, IIDParams(alpha, beta, rho), trials, seed))[1]


def test_config_validation():
    for bad in [dict(tol_param=0), dict(tol_loglik=-1), dict(max_iter=0), dict(restarts=0)]:
        with pytest.raises(ValidationError):
            EmConfig(**bad)


def test_init_is_deterministic_and_ordered():
    counts = iid_data()
    a = init_params("iid", counts, 7)
    assert a == init_params("iid", counts, 7)
    seen = set()
    for seed in range(100):
        p = init_params("iid", counts, seed)
        assert 0.5 <= p.alpha < 0.99 and 0.001 <= p.beta < 0.5 and 0.01 <= p.rho < 0.5
        seen.add(tuple(p.vector()))
    assert len(seen) == 100
    ml = init_params("multilevel", counts, 3, levels=3)
    assert ml.levels == 3 and ml.rho.sum() == pytest.approx(1.0)


def test_run_em_recovers_iid():
    counts = iid_data(seed=1, n=200)
    params, Q, trace = run_em("iid", counts)
    assert trace.converged
    assert abs(params.alpha - 0.42) < 0.03
    assert abs(params.beta - 0.004) < 0.002
    assert abs(params.rho - 0.034) < 0.006
    assert np.all(np.diff(trace.logliks) >= -1e-9)


def test_run_em_is_deterministic():
    counts = iid_data(seed=2)
    a = run_em("iid", counts, EmConfig(seed=5))
    b = run_em("iid", counts, EmConfig(seed=5))
    assert np.array_equal(a.params.vector(), b.params.vector())
    assert np.array_equal(a.posterior.values, b.posterior.values)
    assert a.trace == b.trace


@pytest.mark.parametrize("seed", range(4))
def test_uninformative_data(seed):
    # with alpha == beta the prior is not identified; EM may carve out a
    # small spurious edge class, but it must not change the picture much
    counts = iid_data(seed=seed, n=200, alpha=0.3, beta=0.3, rho=0.2)
    params, Q, _ = run_em("iid", counts)
    assert abs(params.beta - 0.3) < 0.02
    E, N, w = counts.class_table
    pooled = np.sum(w * E[:, 0]) / np.sum(w * N[:, 0])
    single = profile_loglik("iid", counts, IIDParams(pooled, pooled, 0.5))
    # the two-component fit is no better than one rate for everything
    assert 2 * (profile_loglik("iid", counts, params) - single) < 6.0
    assert np.mean(np.abs(Q.pair_values() - params.rho)) < 0.05


def test_restart_bookkeeping():
    counts = iid_data(seed=4)
    params, _, trace = run_em("iid", counts, EmConfig(restarts=4))
    assert len(trace.restart_logliks) == 4
    assert trace.final_loglik == max(trace.restart_logliks)
    assert trace.restart_logliks.index(max(trace.restart_logliks)) == trace.restart_index


def test_idempotent_at_convergence():
    counts = iid_data(seed=5, n=120)
    # a vanishing log-likelihood tolerance makes the parameter test decide
    config = EmConfig(tol_param=1e-8, tol_loglik=1e-300)
    params, Q, trace = run_em("iid", counts, config)
    assert trace.converged
    again = MODELS["iid"].m_step(counts, e_step_iid(counts, params), params)
    assert np.max(np.abs(again.vector() - params.vector())) < config.tol_param


def test_extra_cycle_shrinks_step_under_defaults():
    counts = iid_data(seed=5, n=120)
    params, Q, trace = run_em("iid", counts)
    again = MODELS["iid"].m_step(counts, e_step_iid(counts, params), params)
    assert np.max(np.abs(again.vector() - params.vector())) <= trace.records[-1].max_delta


def test_incompatible_counts():
    with pytest.raises(ContractError):
        run_em("pernode", parse_counts("a b 1 2\n", default_N=2))
    with pytest.raises(ContractError):
        run_em("iid", parse_reports("a b 1 1\n", default_N=1))
    with pytest.raises(ContractError):
        run_em("iid", parse_counts("0 a b 1 1\n1 a b 0 1\n", modes=2, default_N=[1, 1]))


def test_label_swap_rules():
    counts = parse_counts("a b 2 3\nb c 0 3\na c 3 3\n", default_N=3)
    params = IIDParams(0.1, 0.6, 0.9)
    Q = e_step_iid(counts, params)
    new, Qs = resolve_label_swap(params, Q)
    assert (new.alpha, new.beta, new.rho) == (0.6, 0.1, pytest.approx(0.1))
    np.testing.assert_array_equal(Qs.values, 1.0 - Q.values)
    assert profile_loglik("iid", counts, new) == pytest.approx(profile_loglik("iid", counts, params), abs=1e-12)
    same, Qsame = resolve_label_swap(new, Qs)
    assert same is new and Qsame is Qs

    mm = MultiModalParams([0.1, 0.5], [0.4, 0.3], 0.8)
    swapped, _ = resolve_label_swap(mm)
    np.testing.assert_array_equal(swapped.alpha, [0.4, 0.3])
    pn = PerNodeParams([0.1, 0.2], [0.5, 0.6], 0.7)
    assert resolve_label_swap(pn)[0].rho == pytest.approx(0.3)
    pn_low = PerNodeParams([0.1, 0.2], [0.5, 0.6], 0.3)
    assert resolve_label_swap(pn_low)[0] is pn_low


@pytest.mark.parametrize("seed", range(5))
def test_label_swap_preserves_loglik(seed):
    rng = np.random.default_rng(seed)
    E, N = random_symmetric_counts(rng, 6, 4)
    counts = counts_from_arrays(E, N)
    a, b = sorted(rng.uniform(0.05, 0.95, 2))
    params = IIDParams(a, b, rng.uniform(0.05, 0.95))
    swapped, _ = resolve_label_swap(params)
    # 1 - (1 - rho) need not round-trip exactly in floating point
    assert profile_loglik("iid", counts, swapped) == pytest.approx(profile_loglik("iid", counts, params),
                                                                   abs=1e-12)


@pytest.mark.parametrize("kind", ["iid", "multimodal", "multilevel", "pernode"])
def test_trace_monotone_all_models(kind):
    for seed in range(5):
        if kind == "pernode":
            params = random_pernode_params(40, (0.4, 0.9), (0.0, 0.02), 0.05, seed=seed)
            counts = synthesize(SynthSpec(40, params, 1, seed))[1]
        elif kind == "multilevel":
            counts = synthesize(SynthSpec(40, MultiLevelParams([0.02, 0.3, 0.8], [0.85, 0.1, 0.05]), 6, seed))[1]
        elif kind == "multimodal":
            counts = synthesize(SynthSpec(40, MultiModalParams([0.5, 0.7], [0.02, 0.05], 0.1), (4, 3), seed))[1]
        else:
            counts = iid_data(seed, n=40)
        _, _, trace = run_em(kind, counts, EmConfig(restarts=1, seed=seed), levels=3 if kind == "multilevel" else None)
        assert np.all(np.diff(trace.logliks) >= -1e-9)


def test_max_iter_without_convergence():
    counts = iid_data(seed=6)
    _, _, trace = run_em("iid", counts, EmConfig(max_iter=2, restarts=1))
    assert not trace.converged and trace.iterations_used == 2


def test_initial_params_used_for_first_restart():
    counts = iid_data(seed=7)
    start = IIDParams(0.42, 0.004, 0.034)
    _, _, trace = run_em("iid", counts, EmConfig(restarts=1, max_iter=1), initial=start)
    assert trace.records[0].loglik == pytest.approx(profile_loglik("iid", counts, start))


def _grid_max_loglik(counts):
    E, N, w = counts.class_table
    E, N = E[:, 0], N[:, 0]
    g = np.arange(0.01, 1.0, 0.01)
    a, b, r = np.meshgrid(g, g, g, indexing="ij")
    a, b, r = a[..., None], b[..., None], r[..., None]
    on = r * a ** E * (1 - a) ** (N - E)
    off = (1 - r) * b ** E * (1 - b) ** (N - E)
    return float(np.max(np.sum(w * np.log(on + off), axis=-1)))


@pytest.mark.parametrize("seed", range(6))
def test_small_instance_beats_grid(seed):
    rng = np.random.default_rng(seed)
    E, N = random_symmetric_counts(rng, 4, 2)
    counts = counts_from_arrays(E, N)
    _, _, trace = run_em("iid", counts, EmConfig(restarts=5))
    assert trace.final_loglik >= _grid_max_loglik(counts) - 1e-6

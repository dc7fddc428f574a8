import itertools
import math

import pytest

import perturbmap as pm


def chain_potentials(seed=0):
    model = pm.PairwiseModel.chain([2, 3, 2, 3])
    p = pm.Potentials(model)
    vals = iter([math.sin(1.3 * i + seed) for i in range(200)])
    for d, k in enumerate(model.label_counts):
        p.set_unary(d, [next(vals) for _ in range(k)])
    for e, (i, j) in enumerate(model.edges):
        p.set_pairwise(e, [next(vals) for _ in range(model.label_counts[i] * model.label_counts[j])])
    return model, p


def enumerate_logz(model, p):
    vals = [p(list(y)) for y in itertools.product(*[range(k) for k in model.label_counts])]
    top = max(vals)
    return top + math.log(sum(math.exp(v - top) for v in vals)), top


def test_forward_matches_enumeration():
    model, p = chain_potentials()
    logz, top = enumerate_logz(model, p)
    assert pm.forward_log_partition(p) == pytest.approx(logz, abs=1e-9)
    assert pm.solve_map(p, pm.Solver.chain).value == pytest.approx(top, abs=1e-12)
    assert pm.brute_force(p).log_partition == pytest.approx(logz, abs=1e-9)


def test_gumbel_bound_is_upper():
    model, p = chain_potentials(1)
    logz, _ = enumerate_logz(model, p)
    est = pm.estimate_A(p, samples=500, seed=3, solver=pm.Solver.chain)
    assert est.mean + 3 * est.std_error >= logz


def test_counting_marginals_rows():
    _, p = chain_potentials(2)
    q = pm.counting_marginals(p, samples=37, seed=1, solver=pm.Solver.chain)
    for row in q:
        assert sum(row) == 1.0


def test_wrong_sizes_raise():
    _, p = chain_potentials()
    with pytest.raises(ValueError):
        p.set_unary(0, [1.0, 2.0, 3.0])
    grid = pm.Potentials(pm.PairwiseModel.grid(2, 2, 2))
    with pytest.raises(pm.PreconditionError):
        pm.solve_map(grid, pm.Solver.chain)


def test_train_and_dataset_roundtrip(tmp_path):
    teacher, data = pm.generate_synthetic(pm.SyntheticKind.chain, num=20, vars=5, labels=2, feat_dim=3, seed=4)
    text = pm.dumps_dataset(data)
    path = tmp_path / "d.txt"
    pm.write_dataset(str(path), data)
    again = pm.read_dataset(str(path))
    assert pm.dumps_dataset(again) == text

    cfg = pm.TrainConfig()
    cfg.iters = 200
    cfg.lambda_ = 0.1
    cfg.seed = 5
    rep = pm.train_supervised(again, cfg)
    rep2 = pm.train_supervised(again, cfg)
    assert rep.averaged.values == rep2.averaged.values
    assert len(rep.objective) == 200
    y = pm.predict(rep.averaged, again[0], config=cfg)
    assert len(y) == 5

    wpath = tmp_path / "w.txt"
    pm.write_weights(str(wpath), rep.averaged)
    assert pm.read_weights(str(wpath)).values == rep.averaged.values


def test_malformed_dataset_reports_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("record\nnum_vars 2\nlabel_counts 2 x\nend\n")
    with pytest.raises(pm.InputError, match="line 3"):
        pm.read_dataset(str(path))

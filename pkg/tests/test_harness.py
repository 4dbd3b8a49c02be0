import math

import numpy as np
import pytest

from poslsh.attention import attention_logits
from poslsh.errors import ParameterError
from poslsh.harness import (
    CSV_HEADER,
    ExperimentConfig,
    MatrixFormatError,
    fit_loglog_slope,
    gen_synthetic_instance,
    load_config,
    mean_by_s,
    parse_config_text,
    parse_int_list,
    read_matrix,
    read_qkv,
    read_records,
    run_blocksize_tail,
    run_convergence_sweep,
    write_matrix,
    write_qkv,
    write_records,
)
from poslsh.mask_estimator import block_size_bound


def _small(**kw):
    base = dict(n=32, d=4, d_prime=3, sigma_list=[8.0], s_list=[4], seeds=[0])
    base.update(kw)
    return ExperimentConfig(**base)


# -- synthetic instances -------------------------------------------------------

def test_synthetic_instance_is_deterministic():
    a = gen_synthetic_instance(16, 4, 3, seed=5)
    b = gen_synthetic_instance(16, 4, 3, seed=5)
    for x, y in ((a.Q, b.Q), (a.K, b.K), (a.V, b.V)):
        np.testing.assert_array_equal(x, y)
    c = gen_synthetic_instance(16, 4, 3, seed=6)
    assert not np.array_equal(a.Q, c.Q)


def test_synthetic_zero_scale():
    inst = gen_synthetic_instance(8, 4, 2, seed=0, scale=0.0)
    assert not inst.Q.any() and not inst.K.any()


def test_synthetic_logit_spread():
    inst = gen_synthetic_instance(64, 32, 4, seed=1)
    assert attention_logits(inst.Q, inst.K).std() == pytest.approx(1.0, abs=0.1)
    assert inst.Q.std() == pytest.approx(1.0, abs=0.05)


def test_synthetic_rejects_bad_dims():
    with pytest.raises(ParameterError):
        gen_synthetic_instance(0, 4, 2, seed=0)
    with pytest.raises(ParameterError):
        gen_synthetic_instance(4, 4, 2, seed=0, scale=-1.0)


# -- sweeps --------------------------------------------------------------------

def test_one_cell_one_record():
    recs = run_convergence_sweep(_small())
    assert len(recs) == 1
    r = recs[0]
    assert (r.seed, r.n, r.sigma, r.s) == (0, 32, 8.0, 4)
    assert r.bound_holds
    assert r.res_spec >= r.res_max - 1e-9


def test_grid_order_and_prefix_property(tmp_path):
    cfg = _small(sigma_list=[16.0, 4.0], s_list=[10, 1, 3], seeds=[2, 1], output_path=str(tmp_path / "o.csv"))
    recs = run_convergence_sweep(cfg)
    keys = [(r.seed, r.sigma, r.s) for r in recs]
    assert keys == sorted(keys) and len(keys) == 12
    for r in recs:
        assert math.isfinite(r.res_spec) and r.res_max >= 0 and r.output_err >= 0
        assert r.res_spec >= r.res_max - 1e-9
        assert r.bound_holds
    # the s=1 sample set is a prefix of the s=3 one, so the largest block can only grow
    by = {(r.seed, r.sigma, r.s): r for r in recs}
    for seed in (1, 2):
        for sg in (4.0, 16.0):
            assert by[seed, sg, 1].b_max <= by[seed, sg, 3].b_max <= by[seed, sg, 10].b_max


def test_unwritable_output_fails_before_work(tmp_path, monkeypatch):
    import poslsh.harness as h

    calls = []
    monkeypatch.setattr(h, "_run_cell", lambda *a: calls.append(a))
    with pytest.raises(OSError):
        run_convergence_sweep(_small(output_path=str(tmp_path / "missing" / "x.csv")))
    assert calls == []


def test_csv_header_and_round_trip(tmp_path):
    path = tmp_path / "r.csv"
    recs = run_convergence_sweep(_small(s_list=[1, 5], output_path=str(path)))
    lines = path.read_text().splitlines()
    assert lines[0] == "seed,n,sigma,s,res_spec,res_max,output_err,beta_star,p_two_inf,d_tilde_min,b_max,block_flop_units,wall_ms"
    assert tuple(lines[0].split(",")) == CSV_HEADER
    assert len(lines) == 3
    back = read_records(path)
    for a, b in zip(recs, back):
        assert a.row() == b.row()
    write_records(tmp_path / "again.csv", back)
    assert (tmp_path / "again.csv").read_text() == path.read_text()


def test_sweep_bit_reproducible(tmp_path):
    cfg = dict(sigma_list=[2.0, 8.0], s_list=[1, 8], seeds=[0, 1], record_wall_clock=False)
    run_convergence_sweep(_small(output_path=str(tmp_path / "a.csv"), **cfg))
    run_convergence_sweep(_small(output_path=str(tmp_path / "b.csv"), **cfg))
    run_convergence_sweep(_small(output_path=str(tmp_path / "c.csv"), threads=3, **cfg))
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()
    assert b",0.0\n" in a


def test_sweep_reads_qkv_files(tmp_path):
    inst = gen_synthetic_instance(20, 3, 2, seed=4)
    write_qkv(tmp_path / "qkv", inst)
    recs = run_convergence_sweep(_small(qkv_source=f"file:{tmp_path / 'qkv'}", s_list=[3]))
    assert recs[0].n == 20 and recs[0].bound_holds


def test_fault_flag_reaches_audit():
    assert not run_convergence_sweep(_small(inject_fault=True))[0].bound_holds


def test_config_validation():
    for bad in (dict(n=0), dict(s_list=[]), dict(s_list=[0]), dict(sigma_list=[-1.0]),
                dict(delta=0.5), dict(qkv_source="uniform:1")):
        with pytest.raises(ParameterError):
            _small(**bad).validate()


# -- block-size tail -----------------------------------------------------------

def test_tail_reference_cell():
    recs = run_blocksize_tail(ExperimentConfig(n=512, sigma_list=[8.0], s_list=[100], seeds=list(range(100))))
    (r,) = recs
    assert r.bound == pytest.approx(238.05, abs=0.01) == block_size_bound(8.0, 100, 0.01)
    assert r.runs == 100 and r.fraction <= 0.05


def test_tail_tiny_sigma_is_singletons():
    (r,) = run_blocksize_tail(ExperimentConfig(n=64, sigma_list=[0.1], s_list=[1], seeds=list(range(50))))
    assert r.exceedances == 0 and r.bound > 1
    assert r.max_b_max <= 2


# -- slope fit and summaries ---------------------------------------------------

@pytest.mark.parametrize("fn, slope", [
    (lambda s: s**-0.5, -0.5),
    (lambda s: 3.0, 0.0),
    (lambda s: 4.0 / s, -1.0),
])
def test_slope_examples(fn, slope):
    pts = [(s, fn(s)) for s in (10, 100, 1000, 10_000)]
    assert fit_loglog_slope(pts) == pytest.approx(slope, abs=1e-12)


def test_slope_rejects_bad_input():
    with pytest.raises(ParameterError):
        fit_loglog_slope([(1, 1.0), (2, 0.0), (3, 1.0)])
    with pytest.raises(ParameterError):
        fit_loglog_slope([(1, 1.0), (2, 1.0)])


def test_mean_by_s():
    class R:
        def __init__(self, s, v):
            self.s, self.v = s, v

    out = mean_by_s([R(1, 1.0), R(1, 3.0), R(2, 5.0)], "v")
    assert out[1] == (2.0, pytest.approx(1.0))
    assert out[2] == (5.0, 0.0)


# -- file formats --------------------------------------------------------------

def test_matrix_round_trip(tmp_path):
    A = np.random.default_rng(0).standard_normal((4, 3))
    write_matrix(tmp_path / "a.txt", A)
    np.testing.assert_array_equal(read_matrix(tmp_path / "a.txt"), A)


@pytest.mark.parametrize("text, line", [
    ("", 1),
    ("2;2\n1,2\n3,4\n", 1),
    ("2,2\n1,2\n3\n", 3),
    ("2,2\n1,x\n3,4\n", 2),
    ("3,2\n1,2\n3,4\n", 4),
    ("1,2\n1,nan\n", 2),
])
def test_matrix_errors_carry_line(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(MatrixFormatError) as info:
        read_matrix(p)
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_qkv_round_trip(tmp_path):
    inst = gen_synthetic_instance(5, 2, 3, seed=1)
    write_qkv(tmp_path, inst)
    back = read_qkv(tmp_path, sigma=4.0)
    np.testing.assert_array_equal(back.V, inst.V)
    assert back.sigma == 4.0


def test_parse_int_list():
    assert parse_int_list("0-3, 7,9") == [0, 1, 2, 3, 7, 9]
    assert parse_int_list("-2") == [-2]


def test_config_text(tmp_path):
    text = """
    # sweep
    n = 64
    sigma_list = 2, 8
    s_list = 1,10
    seeds = 0-4
    causal = true
    record-wall-clock = no
    """
    vals = parse_config_text(text)
    assert vals == dict(n=64, sigma_list=[2.0, 8.0], s_list=[1, 10], seeds=[0, 1, 2, 3, 4],
                        causal=True, record_wall_clock=False)
    p = tmp_path / "c.cfg"
    p.write_text(text)
    cfg = load_config(p, n=16, seeds=None)
    assert cfg.n == 16 and cfg.seeds == [0, 1, 2, 3, 4]
    for bad in ("bogus = 1", "n 5", "n = five", "causal = maybe"):
        with pytest.raises(ParameterError):
            parse_config_text(bad)

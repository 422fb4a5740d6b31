import json

import numpy as np
import pytest

from mcmccv.chain import (
    ChainBundle,
    ChainRecord,
    IntegrandSpec,
    deduplicate,
    drop_burn_in,
    evaluate_integrand,
    load_chain,
    load_chain_dir,
    read_matrix_csv,
    save_chain,
    save_chain_dir,
    thin,
)
from mcmccv.errors import ChainFormatError, ConfigError, NonFiniteError, ShapeMismatchError


def _small_mh():
    # x0 -> reject -> accept -> accept
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0], [1.5, 2.5]])
    P = np.array([[9.0, 9.0], [1.0, 2.0], [1.5, 2.5]])
    return ChainRecord(X, gradients=-X, proposals=P, mh_ratios=[0.1, 2.0, 0.7], accepts=[0, 1, 1], sampler="rwm")


def test_record_is_immutable_copy():
    X = np.zeros((3, 2))
    ch = ChainRecord(X)
    X[0, 0] = 5.0
    assert ch.samples[0, 0] == 0.0
    with pytest.raises(ValueError):
        ch.samples[0, 0] = 1.0


def test_shape_and_finiteness_checks():
    with pytest.raises(ShapeMismatchError):
        ChainRecord(np.zeros((3, 2)), gradients=np.zeros((3, 3)))
    with pytest.raises(NonFiniteError) as err:
        ChainRecord(np.array([[0.0], [np.nan]]))
    assert err.value.row == 2 and err.value.column == 1
    with pytest.raises(ShapeMismatchError):
        ChainRecord(np.zeros((3, 1)), proposals=np.zeros((2, 1)))


def test_accept_flags_must_match_samples():
    ch = _small_mh()
    with pytest.raises(ChainFormatError) as err:
        ChainRecord(ch.samples, proposals=ch.proposals, mh_ratios=ch.mh_ratios, accepts=[1, 1, 1])
    assert err.value.row == 1
    with pytest.raises(ChainFormatError):
        ChainRecord(ch.samples, proposals=ch.proposals, mh_ratios=[-1, 1, 1], accepts=ch.accepts)


def test_integrand_parse_and_eval():
    X = np.array([[1.0, -2.0], [3.0, 4.0]])
    assert np.array_equal(evaluate_integrand(X, IntegrandSpec.parse("x2")), [-2.0, 4.0])
    assert np.array_equal(evaluate_integrand(X, IntegrandSpec.parse("x1^2")), [1.0, 9.0])
    assert np.array_equal(evaluate_integrand(X, IntegrandSpec.custom(lambda x: x.sum())), [-1.0, 7.0])
    with pytest.raises(ConfigError):
        IntegrandSpec.parse("sin(x1)")
    with pytest.raises(ConfigError):
        evaluate_integrand(X, IntegrandSpec.coordinate(3))


def test_burn_in_thin_dedup():
    ch = _small_mh()
    b = drop_burn_in(ch, 1)
    assert b.n == 3 and b.proposals.shape == (2, 2) and b.accepts.tolist() == [1, 1]
    with pytest.raises(ConfigError):
        drop_burn_in(ch, 3)
    t = thin(ch, 2)
    assert t.n == 2 and t.proposals is None
    assert thin(ch, 1) is ch
    r, idx = deduplicate(ch)
    assert idx.tolist() == [0, 2, 3] and r.n == 3 and r.proposals is None
    assert np.array_equal(r.gradients, ch.gradients[idx])


def test_csv_roundtrip_is_exact(tmp_path, rwm_chain):
    save_chain(rwm_chain, tmp_path)
    back = load_chain(
        tmp_path / "samples.csv", tmp_path / "gradients.csv", tmp_path / "proposals.csv", sampler="rwm"
    )
    assert back.equals(rwm_chain)


def test_csv_errors_locate_cell(tmp_path):
    p = tmp_path / "samples.csv"
    p.write_text("x1,x2\n1,2\n3,abc\n")
    with pytest.raises(ChainFormatError) as err:
        read_matrix_csv(p, prefix="x")
    assert (err.value.row, err.value.column) == (2, 2)
    p.write_text("x1,x2\n1,2\n3\n")
    with pytest.raises(ShapeMismatchError) as err:
        read_matrix_csv(p)
    assert err.value.row == 2
    p.write_text("x1,y2\n1,2\n")
    with pytest.raises(ChainFormatError):
        read_matrix_csv(p, prefix="x")
    p.write_text("x1\n1\ninf\n")
    with pytest.raises(NonFiniteError):
        read_matrix_csv(p)
    p.write_text("x1\n1\n")
    with pytest.raises(ShapeMismatchError):
        load_chain(p)


def test_bundle_dir_roundtrip(tmp_path):
    ch = ChainRecord(np.array([[0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]), sampler="bvs_gibbs")
    cond = np.array([[0.1, 0.9], [0.2, 0.8], [0.3, 0.7]])
    save_chain_dir(ChainBundle(ch, cond, {"config": {"n": 3}}), tmp_path)
    back = load_chain_dir(tmp_path)
    assert back.chain.equals(ch)
    assert np.array_equal(back.conditionals, cond)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["sampler"] == "bvs_gibbs" and "conditionals.csv" in manifest["files"]
    trimmed = back.burn_in(1).thin(1)
    assert np.array_equal(trimmed.conditionals, cond[1:])

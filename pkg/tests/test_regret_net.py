import numpy as np
import pytest

from pcsracing.config import TrainConfig
from pcsracing.enums import Activation
from pcsracing.errors import ModelFormatError
from pcsracing.regret_net import (encode, encode_all_actions, feature_length, forward, grad_check, init_model,
                                  l1_loss_and_grads, load_model, predict_regrets, save_model, train)
from pcsracing.schemas import GameHistory, PcsPoint


def _history():
    return GameHistory(ego_pcs=[PcsPoint(agg=0.2, res=0.7)], opp_pcs=[PcsPoint(agg=0.9, res=0.1)])


def test_feature_length():
    assert feature_length(4) == 40
    assert feature_length(2) == 16
    assert feature_length(3, action_count=6) == 16 + 12 + 6


def test_encoding_layout():
    x = encode(_history(), 1, m=3)
    assert len(x) == feature_length(3)
    assert x[0:4].tolist() == [0.2, 0.7, 0.0, 0.0]
    assert x[4:8].tolist() == [0.9, 0.1, 0.0, 0.0]
    assert x[8:12].tolist() == [1.0, 1.0, 0.0, 0.0]
    assert x[12:16].tolist() == [1.0, 1.0, 0.0, 0.0]
    assert not x[16:24].any()
    assert x[24:28].tolist() == [0.0, 1.0, 0.0, 0.0]

    deeper = _history().extended(PcsPoint(agg=0.3, res=0.6), PcsPoint(agg=0.8, res=0.2), action=3)
    y = encode(deeper, 0, m=3)
    assert y[16:24].tolist() == [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    assert encode_all_actions(deeper, 3).shape == (4, 28)


def test_encoding_rejects_bad_histories():
    too_long = _history().extended(PcsPoint(agg=0.0, res=0.0), PcsPoint(agg=0.0, res=0.0), 0)
    with pytest.raises(ValueError):
        encode(too_long, 0, m=2)
    lopsided = GameHistory(ego_pcs=[PcsPoint(agg=0.0, res=0.0)], opp_pcs=[])
    with pytest.raises(ValueError):
        encode(lopsided, 0, m=3)
    with pytest.raises(ValueError):
        encode(_history(), 4, m=3)


def _off_kink_model(x, seed=0):
    model = init_model(len(x), 8, seed=seed, dtype=np.float64)
    model.b1[:] = 0.5 * np.sign(model.W1 @ x)
    return model


def test_gradient_check_passes_away_from_kinks():
    x = np.random.default_rng(1).uniform(size=10)
    model = _off_kink_model(x)
    y = forward(model, x)
    result = grad_check(model, x, y - 3.0, h=1e-6)
    assert not result.skipped
    assert result.checked == 8 * 10 + 8 + 8 + 1
    assert result.max_rel_error < 1e-5


def test_gradient_check_skips_at_the_loss_kink():
    x = np.random.default_rng(2).uniform(size=10)
    model = _off_kink_model(x)
    assert grad_check(model, x, forward(model, x)).skipped


def test_identity_activation_makes_the_model_linear():
    model = init_model(6, 4, activation=Activation.IDENTITY, seed=3, dtype=np.float64)
    x = np.random.default_rng(3).uniform(size=6)
    expected = float(model.W2[0] @ (model.W1 @ x + model.b1) + model.b2[0])
    assert forward(model, x) == pytest.approx(expected)


def test_clipped_output_is_never_negative():
    model = init_model(6, 4, seed=4)
    model.b2[:] = -50.0
    X = np.random.default_rng(4).uniform(size=(20, 6))
    assert np.all(forward(model, X, clip=True) == 0.0)
    assert np.all(forward(model, X) < 0.0)
    with pytest.raises(ValueError):
        forward(model, np.zeros(5))


def test_training_recovers_a_realizable_target(tmp_path):
    rng = np.random.default_rng(5)
    target_model = init_model(16, 8, seed=6)
    X = rng.uniform(size=(1024, 16)).astype(np.float32)
    y = forward(target_model, X)
    start = target_model.copy()
    for p in start.parameters().values():
        p += rng.normal(0.0, 0.01, size=p.shape).astype(np.float32)
    initial, _ = l1_loss_and_grads(start, X, y)

    cfg = TrainConfig(hidden=8, batch=64, epochs=200, seed=7)
    log = tmp_path / "train.csv"
    result = train(X, y, cfg, model=start, log_path=str(log))
    assert result.best_val < 0.5 * initial
    assert result.best_epoch > 0
    assert len(result.history) == 200
    assert log.exists()
    # the starting model is left untouched
    assert l1_loss_and_grads(start, X, y)[0] == pytest.approx(initial)


def test_training_needs_two_batches():
    cfg = TrainConfig(hidden=4, batch=8)
    with pytest.raises(ValueError):
        train(np.zeros((15, 16)), np.zeros(15), cfg)
    with pytest.raises(ValueError):
        train(np.zeros((20, 16)), np.zeros(19), cfg)


def test_model_file_is_bit_exact(tmp_path):
    model = init_model(40, 16, seed=8)
    path = str(tmp_path / "model.bin")
    save_model(model, path)
    loaded = load_model(path, expected_feature_len=40)
    for name, arr in model.parameters().items():
        assert np.array_equal(loaded.parameters()[name], arr)
    assert loaded.activation == Activation.LEAKY_RELU
    assert loaded.alpha == 0.01

    leaky = init_model(40, 16, alpha=0.0137, seed=8)
    save_model(leaky, path)
    assert load_model(path).alpha == 0.0137

    relu = init_model(40, 16, activation=Activation.RELU, seed=8)
    save_model(relu, path)
    assert load_model(path).activation == Activation.RELU


def test_model_format_errors(tmp_path):
    path = tmp_path / "model.bin"
    with pytest.raises(ValueError):
        save_model(init_model(4, 2, activation=Activation.IDENTITY), str(path))
    save_model(init_model(40, 16, seed=9), str(path))
    blob = path.read_bytes()
    with pytest.raises(ModelFormatError):
        load_model(str(path), expected_feature_len=28)
    path.write_bytes(blob[:-4])
    with pytest.raises(ModelFormatError):
        load_model(str(path))
    path.write_bytes(b"ABCD" + blob[4:])
    with pytest.raises(ModelFormatError):
        load_model(str(path))
    # files from the single-precision header layout
    path.write_bytes(blob[:4] + (1).to_bytes(4, "little") + blob[8:])
    with pytest.raises(ModelFormatError):
        load_model(str(path))


def test_predicted_regrets_cover_every_action():
    model = init_model(feature_length(3), 8, seed=10)
    regrets = predict_regrets(model, _history(), m=3)
    assert regrets.shape == (4,)
    assert np.all(regrets >= 0.0)

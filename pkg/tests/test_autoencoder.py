import numpy as np
import pytest

from aptensemble import autoencoder as ae
from aptensemble import kernels
from aptensemble.dataset import APT, SynthConfig, split, synth_generate
from aptensemble.errors import (
    DimensionMismatch,
    EmptyFeedbackSet,
    EmptyTrainingSet,
    LatentTooLarge,
)
from aptensemble.neural_core import DenseNet, Layer, TrainConfig


def _halfpoint_model():
    # Encoder projects to the first coordinate; decoder always outputs
    # sigmoid(0) = 0.5 per feature. Exact fixed point at x = (0.5, 0.5).
    enc = DenseNet([Layer(np.array([[1.0, 0.0]]), np.zeros(1), kernels.ACT_IDENTITY)])
    dec = DenseNet([Layer(np.zeros((2, 1)), np.zeros(2), kernels.ACT_SIGMOID)])
    return ae.AutoencoderModel(encoder=enc, decoder=dec, k=1)


# -- recon_error ----------------------------------------------------------------

def test_recon_error_zero_at_fixed_point():
    model = _halfpoint_model()
    assert ae.recon_error(model, np.array([0.5, 0.5])) == 0.0


def test_recon_error_hand_arithmetic():
    # x = (1, 0), xhat = (0.5, 0.5) -> mean((0.5)^2, (0.5)^2) = 0.25
    model = _halfpoint_model()
    assert ae.recon_error(model, np.array([1.0, 0.0])) == pytest.approx(0.25)


def test_recon_error_matches_scalar_loop(rng):
    model = ae.train_ae(rng.integers(0, 2, size=(20, 10)), TrainConfig(epochs=2, seed=0), k=4)
    x = rng.integers(0, 2, size=10).astype(float)
    xhat = ae.reconstruct(model, x)
    acc = 0.0
    for i in range(10):
        acc += (x[i] - xhat[i]) ** 2
    assert ae.recon_error(model, x) == pytest.approx(acc / 10)


def test_recon_errors_batch_matches_single(rng):
    model = ae.train_ae(rng.integers(0, 2, size=(16, 8)), TrainConfig(epochs=2, seed=1), k=3)
    xs = rng.integers(0, 2, size=(5, 8)).astype(float)
    batch = ae.recon_errors(model, xs)
    for i in range(5):
        assert batch[i] == pytest.approx(ae.recon_error(model, xs[i]))


def test_recon_error_bounded_for_boolean_inputs(rng):
    # Sigmoid decoder keeps xhat in [0,1]; boolean x then bounds the MSE by 1.
    for seed in range(3):
        model = ae.train_ae(rng.integers(0, 2, size=(12, 6)), TrainConfig(epochs=1, seed=seed), k=2)
        for _ in range(20):
            eps = ae.recon_error(model, rng.integers(0, 2, size=6).astype(float))
            assert 0.0 <= eps <= 1.0


# -- encode ------------------------------------------------------------------------

def test_encode_zero_weights():
    enc = DenseNet([Layer(np.zeros((3, 4)), np.zeros(3), kernels.ACT_IDENTITY)])
    dec = DenseNet([Layer(np.zeros((4, 3)), np.zeros(4), kernels.ACT_SIGMOID)])
    model = ae.AutoencoderModel(encoder=enc, decoder=dec, k=3)
    z = ae.encode(model, np.ones(4))
    assert np.array_equal(z, np.zeros(3))


def test_encode_pure(rng):
    model = ae.train_ae(rng.integers(0, 2, size=(10, 6)), TrainConfig(epochs=1, seed=2), k=2)
    x = np.array([1.0, 0, 1, 0, 1, 1])
    assert np.array_equal(ae.encode(model, x), ae.encode(model, x))


def test_encode_equals_encoder_forward(rng):
    model = ae.train_ae(rng.integers(0, 2, size=(10, 6)), TrainConfig(epochs=1, seed=3), k=2)
    x = np.array([0.0, 1, 1, 0, 0, 1])
    direct, _ = model.encoder.forward(x)
    assert np.array_equal(ae.encode(model, x), direct)


def test_encode_dimension_mismatch(rng):
    model = ae.train_ae(rng.integers(0, 2, size=(10, 6)), TrainConfig(epochs=1, seed=4), k=2)
    with pytest.raises(DimensionMismatch):
        ae.encode(model, np.ones(7))


# -- train_ae -----------------------------------------------------------------------

def test_train_memorizes_constant_dataset():
    x = np.tile(np.array([1, 0, 1, 1, 0, 0, 1, 0], dtype=float), (50, 1))
    model = ae.train_ae(x, TrainConfig(learning_rate=2.0, epochs=60, seed=0), k=2)
    assert model.train_log[-1] < 1e-3


def test_train_loss_decreases_on_two_points():
    x = np.array([[1, 0, 1, 0, 1, 0], [0, 1, 0, 1, 0, 1]], dtype=float)
    model = ae.train_ae(x, TrainConfig(learning_rate=1.0, epochs=40, batch_size=2, seed=0), k=5)
    log = np.array(model.train_log)
    # monotone over averaged windows of 5 epochs
    windows = log[: len(log) // 5 * 5].reshape(-1, 5).mean(axis=1)
    assert all(b <= a + 1e-12 for a, b in zip(windows, windows[1:]))


def test_train_final_loss_not_above_first():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, size=(100, 12)).astype(float)
    model = ae.train_ae(x, TrainConfig(epochs=10, seed=5), k=4)
    assert model.train_log[-1] <= model.train_log[0]


def test_train_deterministic_per_seed():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 2, size=(40, 10)).astype(float)
    cfg = TrainConfig(epochs=5, seed=9)
    a = ae.train_ae(x, cfg, k=3)
    b = ae.train_ae(x, cfg, k=3)
    for la, lb in zip(a.encoder.layers + a.decoder.layers, b.encoder.layers + b.decoder.layers):
        assert np.array_equal(la.w, lb.w)
    assert a.train_log == b.train_log


def test_train_rejects_empty_and_large_k():
    with pytest.raises(EmptyTrainingSet):
        ae.train_ae(np.empty((0, 4)), TrainConfig(), k=2)
    with pytest.raises(LatentTooLarge):
        ae.train_ae(np.ones((5, 4)), TrainConfig(), k=4)


# -- threshold baseline ---------------------------------------------------------------

def test_threshold_classify_cases():
    model = _halfpoint_model()
    x = np.array([1.0, 0.0])  # eps = 0.25
    assert ae.ae_threshold_classify(model, x, 0.2) == 1
    assert ae.ae_threshold_classify(model, x, 0.3) == 0
    assert ae.ae_threshold_classify(model, x, 0.25) == 0  # strictly-greater rule


def test_percentile_threshold_flags_synthetic_apts():
    ds = synth_generate(SynthConfig(n_records=800, d=32, apt_rate=0.02, apt_flip_count=8, seed=2))
    train, test = split(ds, 0.7, seed=2)
    benign = train.features_matrix()[train.labels_array() == 0]
    model = ae.train_ae(benign, TrainConfig(epochs=25, seed=2), k=ae.default_latent_dim(32))
    tau = ae.benign_threshold(model, benign)
    x_test = test.features_matrix()
    flags = ae.recon_errors(model, x_test) > tau
    labels = test.labels_array()
    recall = flags[labels == APT].mean()
    assert recall >= 0.8


# -- separation (sanity-scale) -----------------------------------------------------------

def test_apt_eps_exceeds_benign_eps():
    ds = synth_generate(SynthConfig(n_records=600, d=32, apt_rate=0.03, seed=4))
    x = ds.features_matrix()
    labels = ds.labels_array()
    model = ae.train_ae(x[labels == 0], TrainConfig(epochs=20, seed=4), k=8)
    errs = ae.recon_errors(model, x)
    assert errs[labels == 1].mean() > errs[labels == 0].mean()


# -- refinement -------------------------------------------------------------------------

def test_refine_empty_feedback():
    model = _halfpoint_model()
    with pytest.raises(EmptyFeedbackSet):
        ae.refine_on_false_positives(model, np.empty((0, 2)), TrainConfig())


def test_refine_lowers_eps_on_feedback_record(rng):
    x = rng.integers(0, 2, size=(60, 12)).astype(float)
    model = ae.train_ae(x, TrainConfig(epochs=8, seed=6), k=4)
    odd = rng.integers(0, 2, size=12).astype(float)
    before = ae.recon_error(model, odd)
    refined = ae.refine_on_false_positives(
        model, np.tile(odd, (1, 1)), TrainConfig(learning_rate=1.0, epochs=50, seed=6)
    )
    assert ae.recon_error(refined, odd) < before
    assert refined.version == model.version + 1
    assert refined.parent_version == model.version


def test_refine_keeps_benign_loss_stable(rng):
    x = rng.integers(0, 2, size=(80, 10)).astype(float)
    model = ae.train_ae(x, TrainConfig(epochs=15, seed=7), k=4)
    base_loss = float(np.mean(ae.recon_errors(model, x)))
    fp = np.abs(x[:3] - (rng.uniform(size=(3, 10)) < 0.2))
    refined = ae.refine_on_false_positives(
        model, fp, TrainConfig(learning_rate=0.2, epochs=5, seed=7)
    )
    after_loss = float(np.mean(ae.recon_errors(refined, x)))
    assert after_loss <= base_loss * 1.10


def test_model_checkpoint_roundtrip(tmp_path, rng):
    x = rng.integers(0, 2, size=(20, 8)).astype(float)
    model = ae.train_ae(x, TrainConfig(epochs=3, seed=8), k=3)
    model.tau = 0.05
    p = tmp_path / "ae.json"
    model.save(p)
    loaded = ae.AutoencoderModel.load(p)
    assert loaded.k == model.k
    assert loaded.tau == pytest.approx(0.05)
    probe = rng.integers(0, 2, size=8).astype(float)
    assert ae.recon_error(loaded, probe) == pytest.approx(ae.recon_error(model, probe))

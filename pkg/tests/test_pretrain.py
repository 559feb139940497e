import numpy as np

from shipprompt import pretrain
from shipprompt.encoders import Architecture, EncoderParams, encode_visual, init_tiny_encoder
from shipprompt.model import image_to_input


def test_parameter_gradients_match_finite_differences():
    arch = Architecture(image_size=16, model_dim=16, context_window=16)
    base = init_tiny_encoder(3, arch)
    arrays = {k: np.array(v) * (1 if ".ln" in k else 5) for k, v in base.arrays.items()}
    params = EncoderParams(arch, arrays)
    rng = np.random.default_rng(0)
    images = rng.normal(size=(4, 3, 16, 16))
    labels = np.array([0, 1, 2, 1])
    ids = np.array([[-1, -1, 5, 9, 2, 0], [7, 8, 9, 2, 0, 0], [-1, 4, 4, 4, 4, 2]])
    prefix = rng.normal(size=(3, 16))
    pool = np.array([4, 3, 5])

    def loss():
        i, _ = pretrain.visual_forward(params, images)
        t, _ = pretrain.text_forward_ids(params, ids, prefix, pool)
        return pretrain.contrastive_loss(i, t, labels, 0.1)[0]

    i, ic = pretrain.visual_forward(params, images)
    t, tc = pretrain.text_forward_ids(params, ids, prefix, pool)
    _, di, dt = pretrain.contrastive_loss(i, t, labels, 0.1)
    grads = {}
    pretrain.visual_backward(params, ic, di, grads)
    pretrain.text_backward_ids(params, tc, dt, grads)
    assert set(grads) == set(arrays)
    h = 1e-6
    picks = {"text.token_embed": (4, 3), "text.pos": (2, 1)}
    for name in sorted(arrays):
        arr = arrays[name]
        idx = picks.get(name) or tuple(rng.integers(0, s) for s in arr.shape)
        old = arr[idx]
        arr[idx] = old + h
        up = loss()
        arr[idx] = old - h
        down = loss()
        arr[idx] = old
        num = (up - down) / (2 * h)
        assert abs(num - grads[name][idx]) <= 1e-4 * max(abs(num), abs(grads[name][idx])) + 1e-9, name


def test_short_pretraining_is_deterministic_and_reduces_loss(caplog):
    recipe = pretrain.PretrainRecipe(steps=120, image_batch=24, images_per_class=3)
    a = pretrain.pretrain_encoder(5, recipe=recipe)
    b = pretrain.pretrain_encoder(5, recipe=recipe)
    assert a.fingerprint() == b.fingerprint()
    assert not a["visual.proj"].flags.writeable


def test_pretrained_images_are_separated(pretrained_encoders, ships):
    feats = np.stack([encode_visual(pretrained_encoders.clip, image_to_input(ships.load_image(i))).pooled
                      for i in (0, 12, 60, 120)])
    u = feats / np.linalg.norm(feats, axis=1, keepdims=True)
    cos = u @ u.T
    assert cos[np.triu_indices(4, 1)].max() < 0.99


def test_disk_cache_round_trip(tmp_path, monkeypatch):
    monkeypatch.setenv("SHIPPROMPT_CACHE", str(tmp_path))
    recipe = pretrain.PretrainRecipe(steps=2, image_batch=4, images_per_class=1)
    pretrain.pretrained_encoder.cache_clear()
    first = pretrain.pretrained_encoder(9, None, recipe)
    files = list(tmp_path.glob("encoder-*.hpmt"))
    assert len(files) == 1
    pretrain.pretrained_encoder.cache_clear()
    assert pretrain.pretrained_encoder(9, None, recipe).fingerprint() == first.fingerprint()
    pretrain.pretrained_encoder.cache_clear()

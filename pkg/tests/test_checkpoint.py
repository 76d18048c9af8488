import struct

import pytest
import torch

from semrte.batching import collate
from semrte.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from semrte.encoder import EncoderConfig
from semrte.errors import DataError
from semrte.fusion import EntailmentModel, FusionConfig

from test_fusion import _tiny_setup


def test_round_trip_bitwise_forward(tmp_path):
    model, _, examples = _tiny_setup(seed=33)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, extra={"note": "x"})
    reloaded, trailer = load_checkpoint(path)
    assert trailer["note"] == "x"
    assert trailer["encoder"]["d_model"] == 8
    batch = collate(examples)
    assert torch.equal(model(batch).detach(), reloaded(batch).detach())
    for (na, pa), (nb, pb) in zip(
        model.named_parameters(), reloaded.named_parameters()
    ):
        assert na == nb
        assert torch.equal(pa, pb)


def test_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOTACK" + b"\x00" * 32)
    with pytest.raises(DataError, match="bad magic"):
        load_checkpoint(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v9.ckpt"
    path.write_bytes(MAGIC + struct.pack("<H", 9) + struct.pack("<I", 0))
    with pytest.raises(DataError, match="version 9"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    model, _, _ = _tiny_setup(seed=33)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(path)


def test_shape_mismatch_detected(tmp_path):
    model, _, _ = _tiny_setup(seed=33)
    path = tmp_path / "model.ckpt"
    # lie about the fusion config so the rebuilt model expects other shapes
    save_checkpoint(
        path,
        model,
        extra={"fusion": {**model.fusion_cfg.to_json_dict(), "gru_hidden": 6}},
    )
    with pytest.raises(DataError, match="shape"):
        load_checkpoint(path)


def test_dtype_conversion_round_trip(tmp_path):
    enc = EncoderConfig(d_model=8, layers=1, heads=1, ffn_dim=8, max_length=8, seed=2)
    fus = FusionConfig(label_embed_dim=4, gru_hidden=4, sem_proj_dim=8, num_aspects=1)
    model = EntailmentModel(10, 5, enc, fus)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model)
    as_double, _ = load_checkpoint(path, dtype=torch.float64)
    assert next(as_double.parameters()).dtype == torch.float64

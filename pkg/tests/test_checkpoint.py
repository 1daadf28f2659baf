import numpy as np
import pytest

from ymflow.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip_and_layout(tmp_path):
    rng = np.random.default_rng(0)
    form = rng.standard_normal((3, 4, 5, 6, 3))
    g = rng.standard_normal((4, 5, 6, 2, 2)) + 1j * rng.standard_normal((4, 5, 6, 2, 2))
    p = tmp_path / "a.ckpt"
    save_checkpoint(p, {"time": 0.25}, {"field": (form, "form"), "g": (g, "gauge")})
    ck = load_checkpoint(p)
    assert ck.header["time"] == 0.25
    assert np.array_equal(ck.arrays["field"], form) and np.array_equal(ck.arrays["g"], g)
    # axis-major, component-minor on disk
    raw = p.read_bytes()
    body = raw[raw.index(b"\n", len(MAGIC)) + 1:]
    first = np.frombuffer(body[: 8 * form.size], "<f8").reshape(4, 5, 6, 3, 3)
    assert np.array_equal(first[1, 2, 3, :, :], form[:, 1, 2, 3, :])
    assert not (tmp_path / "a.ckpt.tmp").exists()


def test_corrupt_files(tmp_path):
    p = tmp_path / "b.ckpt"
    p.write_bytes(b"nope\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(p)
    save_checkpoint(p, {}, {"x": (np.zeros(4), "raw")})
    data = p.read_bytes()
    p.write_bytes(data[:-8])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(p)
    p.write_bytes(data + b"x")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(p)
    p.write_bytes(data.replace(b'"format_version": 1', b'"format_version": 9'))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(p)

import struct

import numpy as np
import pytest

from herlase.checkpoint import (
    CheckpointError,
    CheckpointVersionError,
    load_blocks,
    load_checkpoint,
    save_blocks,
    save_checkpoint,
)
from herlase.nets import Mlp


def _random_net(seed=0):
    return Mlp(
        [5, 16, 8, 3],
        hidden_activation="relu",
        output_activation="tanh",
        rng=np.random.default_rng(seed),
    )


def test_round_trip_identical_outputs(tmp_path):
    path = tmp_path / "net.hlse"
    net = _random_net(3)
    save_checkpoint(path, {"actor": net})
    loaded, _ = load_checkpoint(path)
    back = loaded["actor"]
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.normal(size=5)
        assert np.array_equal(net.forward(x), back.forward(x))


def test_round_trip_bit_exact_parameters(tmp_path):
    path = tmp_path / "net.hlse"
    net = _random_net(4)
    save_checkpoint(path, {"m": net}, extra_arrays={"stats": np.array([1.5, 2.5])})
    loaded, extras = load_checkpoint(path)
    for a, b in zip(net.parameters(), loaded["m"].parameters()):
        assert a.tobytes() == b.tobytes()
    assert np.array_equal(extras["stats"], [1.5, 2.5])


def test_activations_survive_round_trip(tmp_path):
    path = tmp_path / "net.hlse"
    net = Mlp([2, 4, 1], hidden_activation="tanh", output_activation="sigmoid",
              rng=np.random.default_rng(5))
    save_checkpoint(path, {"m": net})
    back = load_checkpoint(path)[0]["m"]
    assert back.hidden_activation == "tanh"
    assert back.output_activation == "sigmoid"
    assert back.layer_sizes == [2, 4, 1]


def test_wrong_version_is_an_explicit_error(tmp_path):
    path = tmp_path / "net.hlse"
    save_blocks(path, {"a": np.zeros(3)})
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 999)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointVersionError):
        load_blocks(path)


def test_truncated_file_errors_without_partial_result(tmp_path):
    path = tmp_path / "net.hlse"
    save_checkpoint(path, {"m": _random_net(6)})
    raw = path.read_bytes()
    for cut in (9, len(raw) // 2, len(raw) - 3):
        path.write_bytes(raw[:cut])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "net.hlse"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError):
        load_blocks(path)


def test_block_order_and_multiple_nets(tmp_path):
    path = tmp_path / "pair.hlse"
    a, b = _random_net(7), _random_net(8)
    save_checkpoint(path, {"actor": a, "critic": b})
    loaded, _ = load_checkpoint(path)
    assert set(loaded) == {"actor", "critic"}
    x = np.ones(5)
    assert np.array_equal(loaded["actor"].forward(x), a.forward(x))
    assert np.array_equal(loaded["critic"].forward(x), b.forward(x))

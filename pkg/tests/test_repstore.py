import json
import struct

import numpy as np
import pytest

from segprobe.errors import ParseError, SegprobeError, ValidationError
from segprobe.ingest import AccentLabel, PhoneToken, WordPosition
from segprobe.repstore import (
    MAGIC,
    SegrepWriter,
    covered_frames,
    read_segrep,
    segment_matrix,
    segment_vector,
    write_segrep,
)


def _token(t_start, t_end, idx=0, utt="u1"):
    return PhoneToken(utt, "ʈ", "w000", WordPosition.INITIAL, t_start, t_end,
                      AccentLabel.MILD, idx)


class TestRoundTrip:
    def test_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        arr = rng.normal(size=(1, 3, 4)).astype(np.float32)
        write_segrep(tmp_path / "store", "m", 0.02, {"u1": arr})
        store = read_segrep(tmp_path / "store")
        back = store.read_all("u1")
        assert back.tobytes() == arr.tobytes()
        assert store.layer_matrix("u1", 0).tobytes() == arr[0].tobytes()

    def test_multi_layer_slicing(self, tmp_path):
        rng = np.random.default_rng(1)
        arr = rng.normal(size=(3, 5, 2)).astype(np.float32)
        write_segrep(tmp_path / "store", "m", 0.02, {"u1": arr})
        store = read_segrep(tmp_path / "store")
        for layer in range(3):
            assert np.array_equal(store.layer_matrix("u1", layer), arr[layer])

    def test_manifest_fields(self, tmp_path):
        arr = np.zeros((2, 4, 3), dtype=np.float32)
        write_segrep(tmp_path / "store", "model-x", 0.02, {"a": arr, "b": arr})
        store = read_segrep(tmp_path / "store")
        m = store.manifest
        assert (m.model_id, m.n_layers, m.dim, m.frame_hop) == ("model-x", 2, 3, 0.02)
        assert store.utterance_ids == ["a", "b"]
        assert store.n_frames("a") == 4


class TestHandWrittenFixture:
    """Byte-level fixture assembled by hand, independent of the writer."""

    def _build(self, tmp_path):
        values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
        payload = MAGIC + struct.pack("<HHIII", 0x0102, 1, 1, 2, 3)
        payload += struct.pack("<6f", *values)
        (tmp_path / "u1.segrep").write_bytes(payload)
        manifest = {
            "format": "SEGREP1", "version": 1, "model_id": "hex", "n_layers": 1,
            "dim": 3, "frame_hop": 0.02,
            "utterances": [{"utterance_id": "u1", "n_frames": 2, "file": "u1.segrep",
                            "data_offset": 24, "size": len(payload)}],
        }
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        return tmp_path

    def test_reads_expected_matrix(self, tmp_path):
        store = read_segrep(self._build(tmp_path))
        assert np.array_equal(store.layer_matrix("u1", 0),
                              np.asarray([[1, 2, 3], [4, 5, 6]], dtype=np.float32))

    def test_byte_order_marker_round_trip(self, tmp_path):
        store = read_segrep(self._build(tmp_path))
        raw = (tmp_path / "u1.segrep").read_bytes()
        (marker,) = struct.unpack("<H", raw[8:10])
        assert marker == 0x0102
        store.validate()  # no error

    def test_swapped_marker_rejected(self, tmp_path):
        self._build(tmp_path)
        raw = bytearray((tmp_path / "u1.segrep").read_bytes())
        raw[8:10] = struct.pack(">H", 0x0102)  # big-endian marker bytes
        (tmp_path / "u1.segrep").write_bytes(bytes(raw))
        with pytest.raises(ParseError, match="endianness marker"):
            read_segrep(tmp_path).layer_matrix("u1", 0)


class TestValidation:
    def _store(self, tmp_path, n_layers=2):
        arr = np.arange(24, dtype=np.float32).reshape(n_layers, 4, 3)
        write_segrep(tmp_path / "store", "m", 0.02, {"u1": arr})
        return tmp_path / "store"

    def test_layer_count_mismatch(self, tmp_path):
        root = self._store(tmp_path)
        manifest = json.loads((root / "manifest.json").read_text())
        manifest["n_layers"] = 3  # payload holds 2 layers
        (root / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ParseError, match="layer count mismatch"):
            read_segrep(root).layer_matrix("u1", 0)

    def test_truncated_file(self, tmp_path):
        root = self._store(tmp_path)
        payload = (root / "u1.segrep").read_bytes()
        (root / "u1.segrep").write_bytes(payload[:-8])
        with pytest.raises(ParseError, match="truncated"):
            read_segrep(root).layer_matrix("u1", 0)

    def test_non_finite_rejected(self, tmp_path):
        arr = np.zeros((1, 2, 2), dtype=np.float32)
        arr[0, 1, 1] = np.inf
        write_segrep(tmp_path / "store", "m", 0.02, {"u1": arr})
        with pytest.raises(ValidationError, match="non-finite"):
            read_segrep(tmp_path / "store").layer_matrix("u1", 0)

    def test_unknown_utterance_and_layer(self, tmp_path):
        root = self._store(tmp_path)
        store = read_segrep(root)
        with pytest.raises(ValidationError):
            store.layer_matrix("nope", 0)
        with pytest.raises(ValidationError):
            store.layer_matrix("u1", 9)

    def test_writer_lock_excludes_second_writer(self, tmp_path):
        target = tmp_path / "store"
        with SegrepWriter(target, "m", 1, 2, 0.02):
            with pytest.raises(SegprobeError, match="locked"):
                with SegrepWriter(target, "m", 1, 2, 0.02):
                    pass
        # lock released afterwards
        with SegrepWriter(target, "m", 1, 2, 0.02) as w:
            w.add("u1", np.zeros((1, 2, 2), dtype=np.float32))

    def test_writer_shape_check(self, tmp_path):
        with SegrepWriter(tmp_path / "s", "m", 2, 3, 0.02) as w:
            with pytest.raises(ValidationError):
                w.add("u1", np.zeros((1, 4, 3), dtype=np.float32))
            w.add("u1", np.zeros((2, 4, 3), dtype=np.float32))


class TestSegmentVector:
    def test_single_covered_frame_is_identity(self):
        m = np.asarray([[1.0, 2.0], [5.0, 7.0]])
        # centers at 10 ms and 30 ms for hop 0.02
        sv = segment_vector(m, _token(0.02, 0.04), hop=0.02)
        assert np.allclose(sv.v, [5.0, 7.0])

    def test_two_row_mean(self):
        m = np.asarray([[1.0, 1.0], [3.0, 3.0]])
        sv = segment_vector(m, _token(0.0, 0.04), hop=0.02)
        assert np.allclose(sv.v, [2.0, 2.0])

    def test_token_before_first_frame_is_error(self):
        m = np.ones((4, 2))
        with pytest.raises(ValidationError, match="shorter than frame hop"):
            segment_vector(m, _token(0.0, 0.005), hop=0.02)

    def test_convex_hull_and_permutation_invariance(self):
        rng = np.random.default_rng(2)
        m = rng.normal(size=(10, 4))
        tok = _token(0.0, 0.2)
        sv = segment_vector(m, tok, hop=0.02)
        assert np.all(sv.v >= m.min(axis=0) - 1e-12)
        assert np.all(sv.v <= m.max(axis=0) + 1e-12)
        sv2 = segment_vector(m[::-1].copy(), tok, hop=0.02)
        assert np.allclose(sv.v, sv2.v)

    def test_half_open_span(self):
        idx = covered_frames(5, 0.02, 0.03, 0.05)
        # centers: 0.01 0.03 0.05 0.07 0.09; [0.03, 0.05) covers only 0.03
        assert idx.tolist() == [1]

    def test_segment_matrix_stacks_tokens(self, tmp_path):
        rng = np.random.default_rng(3)
        arr = rng.normal(size=(2, 10, 3)).astype(np.float32)
        write_segrep(tmp_path / "s", "m", 0.02, {"u1": arr})
        store = read_segrep(tmp_path / "s")
        toks = [_token(0.0, 0.06, 0), _token(0.1, 0.2, 1)]
        X = segment_matrix(store, toks, layer=1)
        assert X.shape == (2, 3)
        assert np.allclose(X[0], arr[1, :3].mean(axis=0))

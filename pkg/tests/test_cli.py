import json
import subprocess
import sys

import numpy as np
import pytest

from semanticache import compress_multi_head, io_format
from semanticache.bench import BENCH_FIELDS, read_csv
from semanticache.cli import main
from semanticache.synthetic import SyntheticSpec, delimiter_mask, generate

from conftest import make_cache


@pytest.fixture
def spec_file(tmp_path):
    def write(**kw):
        base = dict(n=256, d=16, heads=2, cluster_count=8, noise_sigma=0.05, delimiter_period=32, rng_seed=5)
        base.update(kw)
        p = tmp_path / f"spec_{len(list(tmp_path.iterdir()))}.json"
        p.write_text(json.dumps(base))
        return p

    return write


def test_gen_is_deterministic(spec_file, tmp_path):
    spec = spec_file()
    assert main(["gen", "--spec", str(spec), "--output", str(tmp_path / "a.sckv")]) == 0
    assert main(["gen", "--spec", str(spec), "--output", str(tmp_path / "b.sckv")]) == 0
    assert (tmp_path / "a.sckv").read_bytes() == (tmp_path / "b.sckv").read_bytes()


def test_gen_zero_noise_single_cluster():
    mh = generate(SyntheticSpec(n=50, d=4, heads=2, cluster_count=1, noise_sigma=0.0, delimiter_period=7))
    for head in mh:
        keys = head.keys[~head.delimiter_mask]
        assert np.all(keys == keys[0])
        assert head.delimiter_mask.tolist() == delimiter_mask(50, 7).tolist()
    assert mh[0].delimiter_mask.sum() == 7


def test_gen_rejects_bad_spec(spec_file, tmp_path, capsys):
    assert main(["gen", "--spec", str(spec_file(n=0)), "--output", str(tmp_path / "x.sckv")]) == 9
    assert main(["gen", "--spec", str(spec_file(delimiter_period=1)), "--output", str(tmp_path / "x.sckv")]) == 9
    assert main(["gen", "--spec", str(tmp_path / "missing.json"), "--output", str(tmp_path / "x.sckv")]) == 3
    with pytest.raises(ValueError):
        SyntheticSpec.from_dict({"n": 4, "d": 2, "colour": "red"})


def test_compress_all_singletons(tmp_path, capsys, rng):
    cache = make_cache(rng.standard_normal((20, 6)), delimiters=rng.random(20) < 0.2)
    io_format.save_cache(cache, tmp_path / "in.sckv")
    rc = main(["compress", "--input", str(tmp_path / "in.sckv"), "--tau", "1.0", "--output", str(tmp_path / "o.scckv")])
    assert rc == 0
    assert "retained 1.0000" in capsys.readouterr().out
    (cc,) = io_format.load_compressed(tmp_path / "o.scckv")
    assert len(cc) == 20


def test_compress_all_delimiters(tmp_path, capsys):
    cache = make_cache(np.random.default_rng(1).standard_normal((5, 3)), delimiters=[1] * 5)
    io_format.save_cache(cache, tmp_path / "in.json")
    rc = main(["compress", "--input", str(tmp_path / "in.json"), "--tau", "0.1", "--output", str(tmp_path / "o.scckv")])
    assert rc == 0
    assert "retained 1.0000" in capsys.readouterr().out
    (cc,) = io_format.load_compressed(tmp_path / "o.scckv")
    assert cc.kinds.tolist() == [1] * 5


def test_compress_matches_library(tmp_path, spec_file, capsys):
    spec = spec_file(n=1024, d=32, heads=2, cluster_count=32, noise_sigma=0.05, delimiter_period=64)
    dump = tmp_path / "g.sckv"
    main(["gen", "--spec", str(spec), "--output", str(dump)])
    capsys.readouterr()
    main(["compress", "--input", str(dump), "--tau", "0.7", "--output", str(tmp_path / "g.scckv")])
    printed = [line for line in capsys.readouterr().out.splitlines() if line.startswith("head")]
    lib = compress_multi_head(io_format.load_cache(dump), 0.7)
    assert printed == [f"head {h}: retained {cc.retained_fraction:.4f} (1024 -> {len(cc)} entries)" for h, cc in enumerate(lib)]
    assert io_format.dumps_compressed(lib) == (tmp_path / "g.scckv").read_bytes()


def test_compress_fixed_chunking(tmp_path, spec_file):
    dump = tmp_path / "g.sckv"
    main(["gen", "--spec", str(spec_file()), "--output", str(dump)])
    assert main(["compress", "--input", str(dump), "--tau", "0.5", "--chunking", "fixed:64", "--output", str(tmp_path / "f.scckv")]) == 0
    assert main(["verify", "--input", str(dump), "--compressed", str(tmp_path / "f.scckv"), "--tau", "0.5", "--chunking", "fixed:64"]) == 0


def test_compress_exit_codes(tmp_path):
    cache = make_cache(np.ones((3, 2)))
    good = io_format.dumps_cache(cache)
    cases = {
        "magic.sckv": (b"ABCD" + good[4:], 4),
        "crc.sckv": (good[:25] + bytes([good[25] ^ 1]) + good[26:], 6),
        "trunc.sckv": (good[:-2], 7),
    }
    for name, (data, code) in cases.items():
        (tmp_path / name).write_bytes(data)
        assert main(["compress", "--input", str(tmp_path / name), "--tau", "0.5", "--output", str(tmp_path / "o")]) == code
    assert main(["compress", "--input", str(tmp_path / "nope"), "--tau", "0.5", "--output", str(tmp_path / "o")]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["compress", "--input", "x", "--tau", "3", "--output", "y"])
    assert exc.value.code == 2


def test_verify_passes_on_gen_output(tmp_path, spec_file, capsys):
    dump = tmp_path / "g.sckv"
    main(["gen", "--spec", str(spec_file()), "--output", str(dump)])
    assert main(["verify", "--input", str(dump)]) == 0
    main(["compress", "--input", str(dump), "--tau", "0.6", "--output", str(tmp_path / "g.scckv")])
    assert main(["verify", "--input", str(dump), "--compressed", str(tmp_path / "g.scckv")]) == 0
    assert main(["verify", "--input", str(dump), "--compressed", str(tmp_path / "g.scckv"), "--tau", "0.6"]) == 0
    capsys.readouterr()
    assert main(["verify", "--input", str(dump), "--compressed", str(tmp_path / "g.scckv"), "--tau", "0.9"]) == 1
    assert "recompress" in capsys.readouterr().out


def test_verify_fails_on_crc_corruption(tmp_path, spec_file, capsys):
    dump = tmp_path / "g.sckv"
    main(["gen", "--spec", str(spec_file()), "--output", str(dump)])
    data = bytearray(dump.read_bytes())
    data[100] ^= 0x40
    dump.write_bytes(bytes(data))
    assert main(["verify", "--input", str(dump)]) == 1
    assert "CrcMismatchError" in capsys.readouterr().out


def test_verify_fails_on_weight_sum(tmp_path, spec_file, capsys):
    import struct
    import zlib

    dump = tmp_path / "g.sckv"
    main(["gen", "--spec", str(spec_file(heads=1)), "--output", str(dump)])
    main(["compress", "--input", str(dump), "--tau", "0.6", "--output", str(tmp_path / "g.scckv")])
    (cc,) = io_format.load_compressed(tmp_path / "g.scckv")
    data = bytearray((tmp_path / "g.scckv").read_bytes())
    m, d = len(cc), cc.dim
    w_off = 24 + 4 + m * d * 8 + m * 4
    struct.pack_into("<I", data, w_off, struct.unpack_from("<I", data, w_off)[0] + 3)
    body = bytes(data[:-4])
    (tmp_path / "bad.scckv").write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    capsys.readouterr()
    assert main(["verify", "--input", str(dump), "--compressed", str(tmp_path / "bad.scckv")]) == 1
    assert "weight-conservation" in capsys.readouterr().out


def test_bench_csv(tmp_path, spec_file, capsys):
    spec = spec_file(n=512, d=16, heads=1)
    out = tmp_path / "b.csv"
    rc = main(["bench", "--spec", str(spec), "--tau-grid", "0.5,0.9", "--queries", "2", "--repeats", "3", "--csv", str(out)])
    assert rc == 0
    text = out.read_text()
    assert any(line.startswith("# timing_workers=1") for line in text.splitlines())
    header = [line for line in text.splitlines() if not line.startswith("#")][0]
    assert header.split(",") == BENCH_FIELDS
    rows = read_csv(out)
    assert [r.tau for r in rows] == [0.5, 0.9]
    for r in rows:
        assert abs(r.retained_fraction + r.removed_fraction_pct / 100 - 1) < 1e-9
        assert r.speedup == pytest.approx(r.attention_time_full / r.attention_time_compressed, rel=1e-12)


def test_module_entry_point(tmp_path, spec_file):
    dump = tmp_path / "g.sckv"
    proc = subprocess.run(
        [sys.executable, "-m", "semanticache", "gen", "--spec", str(spec_file()), "--output", str(dump)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert dump.exists()

import csv
import struct

import numpy as np
import pytest

from mcfh import fileio
from mcfh.cli import main
from mcfh.core import ComplexSignal, InvalidArgumentError
from mcfh.experiments import nmse
from mcfh.fh_signal import HopRecord
from mcfh.mc_sampler import CosetStreams, McConfig

TC = 4e-7


def test_signal_round_trip(tmp_path):
    x = ComplexSignal(np.array([1 + 2j, -0.5j, 3.25]), TC, 1e-5)
    p = str(tmp_path / "x.sig")
    fileio.write_signal(p, x)
    raw = open(p, "rb").read()
    assert raw[:4] == b"MCFH" and struct.unpack_from("<IQ", raw, 4) == (1, 3)
    assert np.frombuffer(raw, "<f8", offset=16).tolist() == [1, 2, 0, -0.5, 3.25, 0]
    y = fileio.read_signal(p)
    assert np.array_equal(y.samples, x.samples)
    assert y.sample_interval_seconds == TC and y.start_time_seconds == 1e-5


def test_signal_corruption(tmp_path):
    p = tmp_path / "x.sig"
    fileio.write_signal(str(p), ComplexSignal(np.ones(4, complex), TC))
    good = p.read_bytes()
    for bad in (b"XXXX" + good[4:], good[:-8], good[:10]):
        p.write_bytes(bad)
        with pytest.raises(InvalidArgumentError):
            fileio.read_signal(str(p))


def test_hops_and_cosets_round_trip(tmp_path):
    hops = [HopRecord(0, 0, 1234.5, 0.25, 0.0, 1e-3), HopRecord(1, 3, 9e5, 6.0, 2e-3, 1.1e-3)]
    fileio.write_hops(str(tmp_path / "h.csv"), hops)
    assert fileio.read_hops(str(tmp_path / "h.csv")) == hops
    cfg = McConfig(TC, 8, (1, 4, 6))
    st = CosetStreams(np.arange(30).reshape(3, 10) * (1 + 1j), cfg, 0.0)
    fileio.write_cosets(str(tmp_path / "c"), st)
    back = fileio.read_cosets(str(tmp_path / "c"))
    assert back.config == cfg and np.array_equal(back.streams, st.streams)
    meta = fileio.read_metadata(str(tmp_path / "c" / "coset_001.sig.meta"))
    assert float(meta["start_time_seconds"]) == pytest.approx(4 * TC)
    assert float(meta["sample_interval_seconds"]) == pytest.approx(8 * TC)


def run(*argv):
    return main([str(a) for a in argv])


def test_pipeline_end_to_end(tmp_path):
    x, hops, cos = tmp_path / "x.sig", tmp_path / "hops.csv", tmp_path / "cos"
    assert run("generate", "--N", 1, "--T", 5e-4, "--duration", 5e-3, "--seed", 4,
               "--out", x, "--hops", hops) == 0
    assert run("sample", "--in", x, "--L", 8, "--q", 8, "--out-dir", cos) == 0
    xh, man = tmp_path / "xh.sig", tmp_path / "rec.csv"
    assert run("recover", "--in-dir", cos, "--r", 625, "--max-sparsity", 8,
               "--out", xh, "--manifest", man) == 0
    assert nmse(fileio.read_signal(str(xh)), fileio.read_signal(str(x))) <= 1e-4
    with open(man) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(fileio.RECOVERY_COLUMNS)
    assert [int(r["segment"]) for r in rows] == list(range(len(rows)))
    # DPSS mode with an on-disk cache
    assert run("recover", "--in-dir", cos, "--r", 625, "--max-sparsity", 8, "--dict", "dpss",
               "--dpss-cache", tmp_path / "cache", "--out", xh, "--manifest", man) == 0
    assert nmse(fileio.read_signal(str(xh)), fileio.read_signal(str(x))) <= 1e-3
    assert list((tmp_path / "cache").glob("*.bin"))
    assert run("spectrogram", "--in", x, "--window", 64, "--out", tmp_path / "s.csv") == 0


def test_exit_codes(tmp_path):
    x = tmp_path / "x.sig"
    assert run("generate", "--N", 1, "--T", 5e-4, "--duration", 5e-3, "--out", x,
               "--hops", tmp_path / "h.csv") == 0
    assert run("sample", "--in", x, "--L", 32, "--q", 40, "--out-dir", tmp_path / "c") == 2
    assert run("sample", "--in", tmp_path / "missing.sig", "--out-dir", tmp_path / "c") == 2
    assert run("spectrogram", "--in", x, "--window", 4, "--out", tmp_path / "s.csv") == 2
    assert run("exp-nmse-q", "--q", 0, "--out-dir", tmp_path / "e") == 2
    # L = 6, C = {0, 2, 4}: columns l and l + 3 coincide and score equally under
    # MUSIC, so a two-row support is singular
    assert run("sample", "--in", x, "--L", 6, "--q", 3, "--pattern", "0,2,4",
               "--out-dir", tmp_path / "c6") == 0
    assert run("recover", "--in-dir", tmp_path / "c6", "--r", 400, "--solver", "music",
               "--out", tmp_path / "o.sig", "--manifest", tmp_path / "m.csv") == 3


def test_config_file_and_flag_priority(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# small run\nN=1\nT=4e-4\nL=8\nq=3,4\nduration=4e-3\ntrials=1\n"
                    f"guard=256\nkd-factors=2\nout_dir={tmp_path / 'from_file'}\n")
    assert run("exp-nmse-q", "--config", conf) == 0
    with open(tmp_path / "from_file" / "fig6.csv") as fh:
        assert [r["q"] for r in csv.DictReader(fh)] == ["3", "4"]
    assert run("exp-nmse-q", "--config", conf, "--q", 2, "--out-dir", tmp_path / "flag") == 0
    with open(tmp_path / "flag" / "fig6.csv") as fh:
        assert [r["q"] for r in csv.DictReader(fh)] == ["2"]
    text = (tmp_path / "flag" / "manifest.txt").read_text()
    assert "period=8" in text and "duration_seconds=0.004" in text
    bad = tmp_path / "bad.conf"
    bad.write_text("colour=blue\n")
    assert run("exp-nmse-q", "--config", bad) == 2
    bad.write_text("q=many\n")
    assert run("exp-nmse-q", "--config", bad) == 2


def test_experiment_commands_write_figures(tmp_path):
    common = ["--N", 1, "--T", 4e-4, "--L", 8, "--q", 4, "--duration", 4e-3, "--trials", 1,
              "--guard", 256]
    assert run("exp-nmse-r", *common, "--r", "50,200", "--out-dir", tmp_path / "r") == 0
    assert run("exp-dpss", *common, "--out-dir", tmp_path / "d") == 0
    for p in ("r/fig5a.csv", "r/fig5b.csv", "d/fig7.csv", "d/fig8.csv"):
        assert (tmp_path / p).stat().st_size > 0

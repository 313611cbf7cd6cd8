import json
import math
import subprocess
import sys

import numpy as np
import pytest

from spintomo import SpinLength, reconstruct_linear
from spintomo import io
from spintomo.bipartite import product_settings, simulate_joint_record
from spintomo.cli import main
from spintomo.measurement import sample_record, simulate_record
from spintomo.spin import random_state
from spintomo.tomography import PAPER_SPIN1_FIVE, fibonacci_hemisphere

from test_basis import GOLDEN

L1 = SpinLength(2)


@pytest.fixture
def state_file(tmp_path, rng):
    rho = random_state(L1, rng)
    path = tmp_path / "state.json"
    io.write_json(io.state_to_json(rho, L1), path)
    return rho, path


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_reconstruct_through_files(tmp_path, state_file):
    rho, path = state_file
    rec = tmp_path / "rec.json"
    rep = tmp_path / "rep.json"
    assert run("simulate", "--in", path, "--out", rec) == 0
    assert run("reconstruct", "--in", rec, "--out", rep) == 0
    report = io.read_json(rep)
    assert report["residual_norm"] < 1e-10
    in_memory = reconstruct_linear(simulate_record(rho, PAPER_SPIN1_FIVE))
    from_file, _ = io.state_from_json(report)
    assert np.allclose(from_file.matrix, in_memory.rho_raw.matrix, atol=1e-15)
    assert report["coefficients"] == dict(in_memory.coefficients.items())


def test_pipeline_is_byte_reproducible(tmp_path, state_file):
    _, path = state_file
    outputs = []
    for k in range(2):
        rec, cnt, rep = (tmp_path / f"{name}{k}.json" for name in ("rec", "cnt", "rep"))
        assert run("simulate", "--in", path, "--out", rec) == 0
        assert run("sample", "--in", rec, "--shots", 1000, "--seed", 9, "--out", cnt) == 0
        assert run("reconstruct", "--in", cnt, "--project-psd", "--out", rep) == 0
        outputs.append([p.read_bytes() for p in (rec, cnt, rep)])
    assert outputs[0] == outputs[1]
    assert outputs[0][2].endswith(b"\n")


def test_basis_golden(tmp_path):
    out = tmp_path / "basis.json"
    assert run("basis", "--two-l", 2, "--out", out) == 0
    got, want = io.read_json(out), json.loads(GOLDEN.read_text())
    assert got["two_l"] == 2
    for a, b in zip(got["operators"], want["operators"], strict=True):
        assert (a["n"], a["i"], a["coherence"]) == (b["n"], b["i"], b["coherence"])
        assert np.max(np.abs(np.array(a["matrix"]) - np.array(b["matrix"]))) <= 1e-12


def test_evolve_long_time(tmp_path, state_file):
    _, path = state_file
    out = tmp_path / "ev.json"
    assert run("evolve", "--in", path, "--gamma-t", 20, "--out", out) == 0
    rho, _ = io.state_from_json(io.read_json(out))
    assert np.max(np.abs(rho.matrix - np.eye(3) / 3)) < 1e-8
    assert run("evolve", "--in", path, "--gamma-t", 0.5, "--dt", 0.01, "--out", out) == 0
    assert io.read_json(out)["method"] == "rk4"


def test_check_reports_residuals(tmp_path, state_file, capsys):
    _, path = state_file
    rec = tmp_path / "rec.json"
    run("simulate", "--in", path, "--out", rec)
    capsys.readouterr()
    assert run("check", "--in", rec) == 0
    diag = json.loads(capsys.readouterr().out)
    assert diag["residual_kind"] == "five-direction"
    assert max(map(abs, diag["consistency_residuals"])) < 1e-12
    assert diag["rank"] == diag["columns"] == 8 and diag["informationally_complete"]


def test_directions_file_and_presets(tmp_path, state_file):
    _, path = state_file
    dirs = tmp_path / "dirs.json"
    dirs.write_text(json.dumps({"directions": [[d.theta, d.phi] for d in fibonacci_hemisphere(7)]}))
    rec = tmp_path / "rec.json"
    assert run("simulate", "--in", path, "--directions", dirs, "--out", rec) == 0
    assert len(io.read_json(rec)["entries"]) == 7
    assert run("simulate", "--in", path, "--directions", "jittered:3", "--out", rec) == 0
    assert len(io.read_json(rec)["entries"]) == 5


def test_bipartite_pipeline(tmp_path, rng):
    la = SpinLength(1)
    rho = random_state(4, rng)
    state = tmp_path / "ab.json"
    rec = tmp_path / "abrec.json"
    rep = tmp_path / "abrep.json"
    data = io.state_to_json(rho, (la, la))
    io.write_json(data, state)
    assert run("simulate", "--in", state, "--out", rec) == 0
    assert len(io.read_json(rec)["entries"]) == 9
    assert run("bipartite-reconstruct", "--in", rec, "--out", rep) == 0
    back, spins = io.state_from_json(io.read_json(rep))
    assert spins == (la, la)
    assert np.allclose(back.matrix, rho.matrix, atol=1e-10)


def test_exit_codes(tmp_path, state_file, capsys):
    _, path = state_file
    assert run("reconstruct", "--in", path) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and "entries" in err["message"]
    assert run("simulate", "--in", tmp_path / "missing.json") == 1
    assert run("simulate", "--in", path, "--directions", "nonsense") == 1
    assert run("basis", "--two-l", 99) == 1
    s = 1 / math.sqrt(2)
    bad = tmp_path / "bad_dirs.json"
    bad.write_text(json.dumps([[math.pi / 2, 0], [math.pi / 2, math.pi / 2], [0, 0],
                               [math.pi / 2, math.pi / 4], [math.acos(s), math.pi / 2]]))
    rec = tmp_path / "rec.json"
    assert run("simulate", "--in", path, "--directions", bad, "--out", rec) == 0
    assert run("reconstruct", "--in", rec) == 2
    last = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(last)["error"] == "IllConditioned"


def test_console_entry_point(tmp_path, state_file):
    _, path = state_file
    proc = subprocess.run([sys.executable, "-m", "spintomo", "simulate", "--in", str(path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    rec = json.loads(proc.stdout)
    proc = subprocess.run([sys.executable, "-m", "spintomo", "reconstruct"], input=json.dumps(rec),
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and json.loads(proc.stdout)["rank"] == 8
    proc = subprocess.run([sys.executable, "-m", "spintomo", "reconstruct"], input="{}",
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 1


def test_record_json_round_trip(rng):
    rho = random_state(SpinLength(3), rng)
    rec = simulate_record(rho, fibonacci_hemisphere(7))
    back = io.record_from_json(json.loads(io.dumps(io.record_to_json(rec))))
    for a, b in zip(rec.entries, back.entries):
        assert np.allclose(a.probabilities, b.probabilities, atol=1e-15)
        assert a.direction.angle_to(b.direction) == 0
    counts = sample_record(rec, 100, seed=1)
    back = io.record_from_json(json.loads(io.dumps(io.record_to_json(counts))))
    assert all(np.array_equal(a.counts, b.counts) for a, b in zip(counts.entries, back.entries))
    data = io.record_to_json(counts)
    assert set(data["entries"][0]["counts"]) == {"3", "1", "-1", "-3"}


def test_joint_record_json_round_trip(rng):
    dirs = fibonacci_hemisphere(5)
    rec = simulate_joint_record(random_state(9, rng), L1, L1, product_settings(dirs, dirs))
    data = io.joint_record_to_json(rec)
    assert "2,-2" in data["entries"][0]["probs"]
    back = io.joint_record_from_json(json.loads(io.dumps(data)))
    assert all(np.allclose(a.probabilities, b.probabilities, atol=1e-15) for a, b in zip(rec.entries, back.entries))


def test_state_file_marks_unphysical_as_raw():
    m = np.diag([1.2, 0.0, -0.2])
    rho, _ = io.state_from_json({"two_l": 2, "matrix": io.matrix_to_json(m)})
    assert rho.raw
    with pytest.raises(ValueError):
        io.state_from_json({"two_l": 3, "matrix": io.matrix_to_json(m)})

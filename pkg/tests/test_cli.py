import numpy as np
import pytest
from scipy.integrate import trapezoid

from admshp.cli import main, read_results

from conftest import equal_variance_dataset


def write_table(path, d, extra=None):
    lines = ["id,y,V"]
    for g in d.groups:
        lines.append(f"{g.id},{g.y!r},{g.V!r}")
    if extra:
        lines.append(extra)
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def run(argv, tmp_path, name="out.csv"):
    out = tmp_path / name
    code = main(argv + ["-o", str(out)])
    return code, (out.read_text() if out.exists() else "")


def summary(comments):
    i = next(n for n, c in enumerate(comments) if c.startswith("# A_hat,"))
    keys = comments[i][2:].split(",")
    vals = comments[i + 1][2:].split(",")
    return dict(zip(keys, vals))


def test_fit_adm(tmp_path):
    src = write_table(tmp_path / "in.csv", equal_variance_dataset(10, 1.0, 18.0))
    code, text = run(["fit", src, "--estimator", "adm"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    s = summary(comments)
    assert float(s["A_hat"]) == pytest.approx(2.0, rel=1e-9)
    assert s["method"] == "ADM" and float(s["q"]) == 1.0
    assert len(rows) == 10
    assert list(rows[0]) == ["id", "y", "V", "B_hat", "B_mean", "B_var", "theta_hat", "se", "lo", "hi"]
    assert rows[0]["B_hat"] == pytest.approx(1 / 3, rel=1e-9)
    assert "# estimator=adm" in comments and "# level=0.95" in comments and "# nodes=512" in comments


def test_fit_mle_boundary(tmp_path):
    src = write_table(tmp_path / "in.csv", equal_variance_dataset(10, 1.0, 5.0))
    code, text = run(["fit", src, "--estimator", "mle"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    assert float(summary(comments)["A_hat"]) == 0.0
    assert "# boundary: full shrinkage" in comments
    assert all(r["B_hat"] == 1.0 for r in rows)


def test_fit_exact(tmp_path):
    src = write_table(tmp_path / "in.csv", equal_variance_dataset(10, 1.0, 18.0))
    code, text = run(["fit", src, "--estimator", "exact"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    assert summary(comments)["method"] == "EXACT"
    assert rows[0]["B_mean"] == pytest.approx(0.379756, abs=1e-6)


def test_bad_variance_row(tmp_path, capsys):
    src = write_table(tmp_path / "in.csv", equal_variance_dataset(10, 1.0, 18.0), extra="bad,1.0,-1")
    code, _ = run(["fit", src], tmp_path)
    err = capsys.readouterr().err
    assert code == 2
    assert "in.csv:12" in err and "'bad'" in err


def test_bad_inputs(tmp_path, capsys):
    p = tmp_path / "h.csv"
    p.write_text("name,y,V\na,1,1\n")
    assert main(["fit", str(p)]) == 2
    p.write_text("id,y,V\na,1,1\nb,2,1\n")
    assert main(["fit", str(p)]) == 2  # too few groups
    p.write_text("id,y,V\na,x,1\n")
    assert main(["fit", str(p)]) == 2
    assert main(["fit", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", str(p), "--estimator", "bogus"])
    assert exc.value.code == 2


def test_round_trip_precision(tmp_path):
    d = equal_variance_dataset(7, 0.7, 9.3)
    src = write_table(tmp_path / "in.csv", d)
    _, text = run(["fit", src], tmp_path)
    _, rows = read_results(text)
    assert [r["y"] for r in rows] == list(d.y)
    body = [ln for ln in text.splitlines() if ln and not ln.startswith("#")][1:]
    for ln, r in zip(body, rows):
        fields = ln.split(",")
        assert all(format(float(f), ".17g") == f for f in fields[1:])
        assert float(fields[6]) == r["theta_hat"]


def test_covariate_columns(tmp_path):
    p = tmp_path / "x.csv"
    rng = np.random.default_rng(3)
    lines = ["id,y,V,x1,x2"] + [f"g{i},{rng.normal():.6f},1.0,1,{i}" for i in range(8)]
    p.write_text("\n".join(lines) + "\n")
    code, text = run(["fit", str(p)], tmp_path)
    assert code == 0
    assert "beta2" in summary(read_results(text)[0])


def test_simulate_deterministic(tmp_path):
    argv = ["simulate", "--k", "10", "--V", "1", "--A-grid", "0,1,16", "--reps", "300", "--seed", "7",
            "--procedures", "adm_shp,mle_plugin"]
    c1, _ = run(argv, tmp_path)
    first = (tmp_path / "out.csv").read_bytes()
    c2, _ = run(argv, tmp_path)
    assert c1 == c2 == 0
    assert (tmp_path / "out.csv").read_bytes() == first


def test_simulate_procedure_blocks(tmp_path):
    code, text = run(["simulate", "--k", "6", "--A-grid", "1", "--reps", "200",
                      "--procedures", "adm_shp,exact_shp", "--nodes", "64"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    assert [r["procedure"] for r in rows] == ["ADM_SHP", "EXACT_SHP"]
    assert "# seed=0" in comments and "# reps=200" in comments


def test_simulate_bad_flags(tmp_path):
    for extra in (["--reps", "0"], ["--A-grid", "a,b"]):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--k", "10"] + extra)
        assert exc.value.code == 2
    assert main(["simulate", "--k", "10", "--A-grid", "-1", "--reps", "10"]) == 2
    assert main(["simulate", "--k", "10", "--procedures", "nope", "--reps", "10"]) == 2


def test_risk(tmp_path):
    code, text = run(["risk", "--k", "10", "--reps", "400", "--spreads", "0,100",
                      "--procedures", "sample_mean,adm_shp"], tmp_path)
    assert code == 0
    _, rows = read_results(text)
    assert len(rows) == 4
    assert [r["procedure"] for r in rows] == ["SAMPLE_MEAN", "ADM_SHP"] * 2
    assert rows[2]["spread"] == pytest.approx(1000.0)


def test_adm_demo(tmp_path):
    code, text = run(["adm-demo", "--k", "10", "--V", "1", "--S", "18"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    assert "# B_adm=0.333333" in comments
    assert "# B_exact_mean=0.379756" in comments
    B = np.array([r["B"] for r in rows])
    assert B.size == 1001
    for col in ("posterior_density", "adjusted_density", "beta_fit_density"):
        f = np.array([r[col] for r in rows])
        assert trapezoid(f, B) == pytest.approx(1.0, abs=1e-3)
    adj = np.array([r["adjusted_density"] for r in rows])
    assert abs(B[np.argmax(adj)] - 1 / 3) <= 0.5 / 1000 + 1e-12
    assert main(["adm-demo", "--k", "3", "--V", "1", "--S", "2"]) == 2


def test_baranchik_cli(tmp_path):
    code, text = run(["baranchik", "--k", "10", "--n", "500"], tmp_path)
    assert code == 0
    comments, rows = read_results(text)
    assert "# passed=True" in comments and len(rows) == 500


def test_stdout_default(capsys, tmp_path):
    src = write_table(tmp_path / "in.csv", equal_variance_dataset(10, 1.0, 18.0))
    assert main(["fit", src]) == 0
    assert capsys.readouterr().out.startswith("# admshp")

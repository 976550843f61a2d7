import csv
import json

import numpy as np
import pytest

from token_screen import ConfigError, RunConfig, load_config, parse_config
from token_screen.cli import build_parser, main


def test_default_config_is_leading_example():
    cfg = RunConfig()
    assert cfg.version == 1
    assert cfg.entropy.kind == "quadratic-binary" and cfg.entropy.alpha == 2.0
    assert cfg.prior == [0.5, 0.5] and cfg.chi == 0.125
    assert (cfg.types.lower, cfg.types.upper) == (1.0, 2.0)


def test_config_round_trip(tmp_path):
    cfg = parse_config({"version": 1, "prior": [0.4, 0.6], "types": {"kind": "tabulated",
                        "r": [1, 1.5, 2], "cdf": [0, 0.5, 1]}})
    path = tmp_path / "c.json"
    path.write_text(cfg.model_dump_json())
    assert load_config(path) == cfg


@pytest.mark.parametrize("body, needle", [
    ('{\n  "chi": 0\n}', "line 2: chi"),
    ('{\n  "version": 1,\n  "grids": {\n    "n_typs": 5\n  }\n}', "line 4: grids.n_typs"),
    ('{\n  "prior": [0.5, 0.6]\n}', "prior"),
    ('{\n  "entropy": {"kind": "shannon"},\n  "prior": [0.2, 0.3, 0.5],\n  "version": 2\n}', "version"),
    ('{\n  "chi": 1,\n}', ":3:1:"),
    ('[1, 2]', "top level"),
])
def test_config_errors_are_addressed(tmp_path, body, needle):
    path = tmp_path / "c.json"
    path.write_text(body)
    with pytest.raises(ConfigError) as exc:
        load_config(path)
    assert needle in str(exc.value)


def test_tabulated_types_need_one_table():
    with pytest.raises(ConfigError):
        parse_config({"types": {"kind": "tabulated", "r": [1, 2, 3]}})
    with pytest.raises(ConfigError):
        parse_config({"types": {"kind": "tabulated", "r": [1, 2, 3], "cdf": [0, 1]}})


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_cli_menu_csv(tmp_path):
    out = tmp_path / "menu.csv"
    assert main(["menu", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["r", "T", "cap_tokens", "price", "marginal_price", "utility", "net_utility"]
    assert data.shape == (401, 7)
    # 17 significant digits round-trip exactly
    text = out.read_text().splitlines()[2].split(",")
    assert float(text[3]) == data[1, 3] and len(text[3].replace(".", "").lstrip("0")) >= 15


def test_cli_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["law", "--out", str(a)])
    main(["law", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_cli_simulate_independent_of_workers(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--paths", "5000", "--seed", "9", "--out", str(a)]) == 0
    assert main(["simulate", "--paths", "5000", "--seed", "9", "--workers", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header, data = read_csv(a)
    assert header == ["path", "tau", "state"] and data.shape == (5000, 3)


def test_cli_skeleton_columns(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "prior": [0.4, 0.6]}))
    out = tmp_path / "s.csv"
    assert main(["skeleton", "--config", str(cfg), "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["t", "k", "mu_1", "mu_2", "beta_1", "beta_2", "zeta"]
    early = data[data[:, 0] < 0.36]
    assert np.allclose((1 - early[:, 3]) ** 2, 0.16 + 0.25 * early[:, 0], atol=1e-6)


def test_cli_revenue_and_baselines(capsys):
    assert main(["revenue"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["revenue"] == pytest.approx(0.20198057, abs=1e-7)
    assert rep["ratios"]["constant_delay"] == pytest.approx(8.1138, abs=1e-3)
    assert main(["baselines"]) == 0
    base = json.loads(capsys.readouterr().out)
    assert base["constant_delay"]["t_min"] == 2.0


def test_cli_quality_and_extended_menu(tmp_path):
    q = tmp_path / "q.csv"
    assert main(["quality", "--r", "1.25", "--out", str(q)]) == 0
    header, data = read_csv(q)
    assert header == ["t", "kappa", "upper", "lower"]
    assert data[-1, 1] == 0.0
    m = tmp_path / "m.csv"
    assert main(["extended-menu", "--valuation", "exp(-r)", "--out", str(m)]) == 0
    assert main(["extended-menu", "--valuation", "exp(-5*(r-1.5)**2)", "--out", str(m)]) == 1


def test_cli_verify_flags_infeasible_law(tmp_path, capsys):
    law = tmp_path / "law.csv"
    assert main(["law", "--out", str(law)]) == 0
    assert main(["verify", "--law", str(law)]) == 0
    rows = law.read_text().splitlines()
    edited = [rows[0]]
    for line in rows[1:]:
        parts = line.split(",")
        if float(parts[0]) >= 1.0:
            parts[1] = parts[2] = "0.5"
        edited.append(",".join(parts))
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(edited) + "\n")
    capsys.readouterr()
    assert main(["verify", "--law", str(bad)]) == 2
    captured = capsys.readouterr()
    assert "t=1" in captured.err
    assert json.loads(captured.out)["capacity"]["violated_time"] == 1.0


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{\n  "chii": 1\n}')
    assert main(["menu", "--config", str(cfg)]) == 3
    assert "line 2: chii" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["menu", "--bogus"])
    assert exc.value.code == 3


def test_cli_reproduce(tmp_path, capsys):
    out = tmp_path / "p.csv"
    assert main(["reproduce", "--example", "leading", "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] and all(c["passed"] for c in summary["checks"])
    header, data = read_csv(out)
    assert header == ["r", "price", "closed_form", "abs_error"] and data.shape == (10, 4)


def test_help_documents_columns():
    text = build_parser().format_help()
    assert "cap_tokens" in text and "F_1..F_n" in text

"""Config parsing, suite orchestration, and the command line verbs."""

import numpy as np
import numpy.testing as npt
import pytest

from fellerlab import cli
from fellerlab.config import (
    ConfigError,
    build_field,
    build_grid_from,
    initial_values,
    parse_config,
    serialize_config,
)

MINIMAL = """
[drift]
kind = zero

[grid]
kind = radial
r_max = 8.0
n = 128

[run]
t_end = 0.25
dt = 0.03125
m_list = 8,16

[checks]
list = positivity
"""


def small_config(drift="kind = zero", checks="positivity", extra_checks="", n=128):
    return f"""
[drift]
{drift}

[grid]
kind = radial
r_max = 8.0
n = {n}

[run]
t_end = 0.25
dt = 0.03125
m_list = 8,16

[checks]
list = {checks}
{extra_checks}
"""


class TestParseConfig:
    def test_minimal_parses(self):
        cfg = parse_config(MINIMAL)
        assert cfg.drift["kind"] == "zero"
        assert cfg.run["m_list"] == (8, 16)
        assert cfg.checks["list"] == ("positivity",)

    def test_defaults_filled(self):
        cfg = parse_config(MINIMAL)
        assert cfg.initial["kind"] == "gaussian"
        assert cfg.initial["width"] == 1.0
        assert cfg.run["seed"] == 0
        assert cfg.checks["cauchy_lattice"] == 8

    def test_round_trip_fixed_point(self):
        cfg = parse_config(MINIMAL)
        text = serialize_config(cfg)
        again = parse_config(text)
        assert again == cfg
        assert serialize_config(again) == text

    def test_beta_scale_range_violation_names_line(self):
        text = "[drift]\nkind = hardy\nbeta_scale = -1\n" + MINIMAL.split("[grid]", 1)[1].join(["[grid]", ""])
        text = "[drift]\nkind = hardy\nbeta_scale = -1\n\n[grid]" + MINIMAL.split("[grid]", 1)[1]
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any(
            "line 3" in v and "beta_scale" in v and "range" in v
            for v in err.value.violations
        )

    def test_duplicate_key_names_both_lines(self):
        text = "[drift]\nkind = zero\nkind = hardy\n\n[grid]" + MINIMAL.split("[grid]", 1)[1]
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any(
            "line 3" in v and "duplicate" in v and "line 2" in v
            for v in err.value.violations
        )

    def test_all_violations_reported_with_lines(self):
        text = (
            "[drift]\n"            # 1
            "kind = hardy\n"       # 2
            "radius = 2.0\n"       # 3  off-kind key
            "\n"
            "[grid]\n"             # 5
            "kind = radial\n"      # 6
            "n = 4\n"              # 7  below minimum
            "\n"
            "[run]\n"              # 9
            "dt = -2\n"            # 10 range
            "t_end = abc\n"        # 11 type
            "\n"
            "[mystery]\n"          # 13 unknown section
            "junk\n"               # 14 not key = value
        )
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        joined = "\n".join(err.value.violations)
        assert "line 3" in joined and "does not apply" in joined
        assert "line 7" in joined
        assert "line 10" in joined
        assert "line 11" in joined and "cannot parse" in joined
        assert "line 13" in joined and "mystery" in joined
        assert "line 14" in joined
        assert "missing required key 'r_max'" in joined

    def test_unknown_key_and_check(self):
        text = MINIMAL.replace("list = positivity", "list = positivity\nwhat = 3")
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("unknown key 'what'" in v for v in err.value.violations)
        text = MINIMAL.replace("list = positivity", "list = nosuch")
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("unknown check 'nosuch'" in v for v in err.value.violations)

    def test_m_list_must_increase(self):
        text = MINIMAL.replace("m_list = 8,16", "m_list = 16,8")
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("m_list" in v for v in err.value.violations)

    def test_window_must_be_ordered(self):
        text = MINIMAL.replace("t_end = 0.25", "t_end = 0.25").replace(
            "[run]", "[run]\ns = 0.5"
        )
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert any("t_end must exceed s" in v for v in err.value.violations)

    def test_comments_and_blanks_ignored(self):
        text = "# leading comment\n" + MINIMAL + "\n# trailing\n"
        assert parse_config(text) == parse_config(MINIMAL)


class TestBuilders:
    def test_grid_and_field(self):
        cfg = parse_config(small_config(drift="kind = hardy\na = 0.5"))
        grid = build_grid_from(cfg)
        assert grid.kind == "radial" and grid.n == 128
        field = build_field(cfg)
        assert field.kind == "hardy" and field.a == 0.5

    def test_beta_scale_wraps(self):
        cfg = parse_config(
            small_config(drift="kind = hardy\na = 1.0\nbeta_scale = 0.25")
        )
        field = build_field(cfg)
        info = field.known_form_bound()
        npt.assert_allclose(info.beta, 0.25 * 4.0)

    def test_gaussian_initial(self):
        cfg = parse_config(MINIMAL)
        grid = build_grid_from(cfg)
        f = initial_values(grid, cfg)
        npt.assert_allclose(f, np.exp(-grid.radii**2))

    def test_eigenmode_radial(self):
        text = MINIMAL + "\n[initial]\nkind = eigenmode\n"
        cfg = parse_config(text)
        grid = build_grid_from(cfg)
        f = initial_values(grid, cfg)
        assert f[0] == 1.0
        arg = np.pi * grid.radii[5] / grid.r_max
        npt.assert_allclose(f[5], np.sin(arg) / arg)

    def test_indicator_smoothed(self):
        text = MINIMAL + "\n[initial]\nkind = indicator_smoothed\nradius = 2.0\nwidth = 0.1\n"
        cfg = parse_config(text)
        grid = build_grid_from(cfg)
        f = initial_values(grid, cfg)
        assert np.all(np.diff(f) <= 1e-12)
        inside = grid.radii < 1.5
        outside = grid.radii > 2.5
        assert np.all(f[inside] > 0.999)
        assert np.all(f[outside] < 1e-3)


def run(tmp_path, text, out=None):
    cfg = parse_config(text)
    return cli.run_suite(cfg, out_dir=out or tmp_path / "out")


class TestRunSuite:
    def test_row_names_follow_check_order(self, tmp_path):
        ledger, ok = run(
            tmp_path,
            small_config(checks="contraction,positivity,composition"),
        )
        lines = ledger.read_text().splitlines()
        assert lines[0] == cli.LEDGER_HEADER
        names = [line.split(",")[1] for line in lines[1:]]
        assert names == ["contraction"] * 2 + ["positivity"] * 2 + ["composition"] * 2
        assert ok

    def test_empty_check_list_header_only(self, tmp_path):
        ledger, ok = run(tmp_path, small_config(checks=""))
        assert ledger.read_text() == cli.LEDGER_HEADER + "\n"
        assert ok

    def test_repeat_runs_byte_identical(self, tmp_path):
        text = small_config(
            drift="kind = hardy\na = 0.2",
            checks="positivity,contraction,formbound,cauchy",
        )
        first, _ = run(tmp_path, text, out=tmp_path / "a")
        second, _ = run(tmp_path, text, out=tmp_path / "b")
        assert first.read_bytes() == second.read_bytes()
        assert (
            (tmp_path / "a" / "trajectory_m8.flab").read_bytes()
            == (tmp_path / "b" / "trajectory_m8.flab").read_bytes()
        )

    def test_unknown_bound_becomes_skip_row(self, tmp_path):
        text = small_config(
            drift="kind = annulus\nc = 1.0\ndelta = 0.5\na_exp = 0.25",
            checks="lp",
        )
        ledger, ok = run(tmp_path, text)
        rows = ledger.read_text().splitlines()[1:]
        assert len(rows) == 2
        for row in rows:
            assert row.split(",")[1] == "lp"
            assert "skipped=" in row and "form bound" in row
        assert ok  # skips do not fail the suite

    def test_failing_check_flips_the_verdict(self, tmp_path):
        text = small_config(
            checks="weak", extra_checks="weak_tol = 1e-12"
        )
        ledger, ok = run(tmp_path, text)
        assert not ok
        rows = ledger.read_text().splitlines()[1:]
        assert all(row.split(",")[5] == "0" for row in rows)

    def test_trajectories_saved_per_level(self, tmp_path):
        run(tmp_path, small_config(checks="positivity"), out=tmp_path / "o")
        assert (tmp_path / "o" / "trajectory_m8.flab").exists()
        assert (tmp_path / "o" / "trajectory_m16.flab").exists()

    def test_formbound_rows_carry_eps(self, tmp_path):
        ledger, ok = run(
            tmp_path,
            small_config(drift="kind = hardy\na = 0.2", checks="formbound"),
        )
        rows = [r for r in ledger.read_text().splitlines()[1:]]
        assert "eps=0.125" in rows[0] and "eps=0.0625" in rows[1]
        assert ok


class TestVerbs:
    def write(self, tmp_path, text, name="exp.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    def test_verify_exit_codes(self, tmp_path):
        good = self.write(tmp_path, small_config(checks="positivity"))
        assert cli.main(["verify", "--config", good, "--out", str(tmp_path / "g")]) == 0
        bad = self.write(
            tmp_path,
            small_config(checks="weak", extra_checks="weak_tol = 1e-12"),
            name="bad.cfg",
        )
        assert cli.main(["verify", "--config", bad, "--out", str(tmp_path / "b")]) == 1

    def test_config_errors_exit_2(self, tmp_path, capsys):
        broken = self.write(tmp_path, "[drift]\nkind = hardy\nbeta_scale = -1\n")
        assert cli.main(["verify", "--config", broken]) == 2
        err = capsys.readouterr().err
        assert "beta_scale" in err and "line 3" in err

    def test_solve_writes_trajectories(self, tmp_path, capsys):
        cfg = self.write(tmp_path, small_config(checks=""))
        out = tmp_path / "solved"
        assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "trajectory_m8.flab").exists()
        assert (out / "trajectory_m16.flab").exists()
        assert "trajectory_m8" in capsys.readouterr().out

    def test_formbound_verb(self, tmp_path, capsys):
        cfg = self.write(
            tmp_path, small_config(drift="kind = hardy\na = 0.2", checks="")
        )
        out = tmp_path / "fb"
        assert cli.main(["formbound", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "formbound.csv").read_text().splitlines()
        assert lines[0] == "m,beta_hat,bound,iterations,converged"
        assert len(lines) == 3
        beta_8 = float(lines[1].split(",")[1])
        assert 0.0 < beta_8 < 0.16

    def test_constants_table(self, capsys):
        assert cli.main(["constants"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("name,value\n")
        rows = dict(line.split(",") for line in out.strip().splitlines()[1:])
        npt.assert_allclose(float(rows["beta_threshold_3"]), 16.0 / 81.0, rtol=1e-15)
        npt.assert_allclose(float(rows["moser_p1"]), 3.6)
        npt.assert_allclose(float(rows["moser_k"]), np.log2(2.5))

    def test_constants_to_file(self, tmp_path):
        assert cli.main(["constants", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "constants.csv").exists()

    def test_counterexample_exit_honest(self, tmp_path, capsys):
        # the match criterion fails by construction at any resolution, so
        # the verb reports it and exits nonzero; the decay law still holds
        cfg = self.write(
            tmp_path,
            "[drift]\nkind = log_counterexample\nkappa = 2.0\nalpha_exp = 1.0\n"
            "\n[grid]\nkind = radial\nr_max = 12.0\nn = 128\n"
            "\n[run]\nt_end = 0.5\ndt = 0.01\n",
        )
        code = cli.main(["counterexample", "--config", cfg, "--out", str(tmp_path / "ce")])
        assert code == 1
        text = (tmp_path / "ce" / "counterexample.csv").read_text()
        lines = text.splitlines()
        assert lines[0] == cli.LEDGER_HEADER
        match = lines[1].split(",")
        decay = lines[2].split(",")
        assert match[1] == "counterexample_match" and match[5] == "0"
        assert decay[1] == "counterexample_decay" and decay[5] == "1"


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    base = tmp_path_factory.mktemp("plots")
    text = small_config(
        drift="kind = hardy\na = 1.0",
        checks="positivity,formbound,cauchy",
        n=256,
    )
    ledger, _ = cli.run_suite(parse_config(text), out_dir=base / "suite")
    return base, ledger


class TestPlotData:

    def test_norm_vs_time(self, artifacts):
        base, ledger = artifacts
        csv = cli.emit_plot_data(
            ledger.parent / "trajectory_m8.flab", "norm_vs_time", out_dir=base
        )
        assert csv.name == "norm_vs_time.csv"
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("#")
        assert lines[1] == "time,sup_norm,l2_norm"
        first = lines[2].split(",")
        npt.assert_allclose(float(first[1]), 1.0)
        assert (base / "norm_vs_time.png").stat().st_size > 0

    def test_beta_vs_eps(self, artifacts):
        base, ledger = artifacts
        csv = cli.emit_plot_data(ledger, "beta_vs_eps", out_dir=base)
        lines = csv.read_text().splitlines()
        assert lines[1] == "eps,beta_hat"
        eps = [float(line.split(",")[0]) for line in lines[2:]]
        assert eps == sorted(eps, reverse=True)
        assert (base / "beta_vs_eps.png").exists()

    def test_cauchy_heatmap(self, artifacts):
        base, ledger = artifacts
        csv = cli.emit_plot_data(ledger, "cauchy_heatmap", out_dir=base)
        lines = csv.read_text().splitlines()
        assert lines[1] == "level,8,16"
        row = lines[2].split(",")
        assert float(row[1]) == 0.0 and float(row[2]) > 0.0
        assert (base / "cauchy_heatmap.png").exists()

    def test_decay_vs_t0(self, tmp_path):
        from fellerlab.checks import counterexample_check, ledger_row
        from fellerlab.grids import RadialGrid

        grid = RadialGrid(3, 12.0, 128)
        match, decay = counterexample_check(2.0, 1.0, 3, grid, 0.1, 0.5, dt=0.01)
        ledger = tmp_path / "ledger.csv"
        ledger.write_text(
            cli.LEDGER_HEADER + "\n" + ledger_row(match) + "\n" + ledger_row(decay) + "\n"
        )
        csv = cli.emit_plot_data(ledger, "decay_vs_t0", out_dir=tmp_path)
        lines = csv.read_text().splitlines()
        assert lines[1] == "t0,sup_norm"
        t0 = np.array([float(line.split(",")[0]) for line in lines[2:]])
        sup = np.array([float(line.split(",")[1]) for line in lines[2:]])
        slope = np.polyfit(np.log(t0), np.log(sup), 1)[0]
        npt.assert_allclose(slope, 0.5, atol=1e-12)

    def test_missing_rows_reported(self, tmp_path, capsys):
        ledger = tmp_path / "ledger.csv"
        ledger.write_text(cli.LEDGER_HEADER + "\n")
        with pytest.raises(ValueError, match="formbound"):
            cli.emit_plot_data(ledger, "beta_vs_eps", out_dir=tmp_path)
        assert (
            cli.main(["plotdata", "beta_vs_eps", "--source", str(ledger)]) == 2
        )
        assert "formbound" in capsys.readouterr().err

    def test_source_required(self, capsys):
        assert cli.main(["plotdata", "norm_vs_time"]) == 2
        assert "--source" in capsys.readouterr().err

    def test_not_a_ledger(self, tmp_path):
        bogus = tmp_path / "x.csv"
        bogus.write_text("hello\n")
        with pytest.raises(ValueError, match="ledger"):
            cli.emit_plot_data(bogus, "cauchy_heatmap")

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ValueError, match="kind"):
            cli.emit_plot_data(tmp_path / "ledger.csv", "sideways")

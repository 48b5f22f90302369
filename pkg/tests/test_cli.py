import pathlib

import pytest
from click.testing import CliRunner

from leokv.cli import ScenarioParseError, load_sweep_config, main, parse_scenario, run_scenario

GOLDEN = pathlib.Path(__file__).parent / "golden"


@pytest.fixture
def runner():
    return CliRunner()


class TestSweepCommand:
    def test_default_sweep_matches_golden(self, runner):
        result = runner.invoke(main, ["sweep"])
        assert result.exit_code == 0
        assert result.output == GOLDEN.joinpath("sweep_default.csv").read_text()

    def test_sweep_to_file_and_plots(self, runner, tmp_path):
        out = tmp_path / "sweep.csv"
        plots = tmp_path / "plots"
        result = runner.invoke(
            main, ["sweep", "-o", str(out), "--plot-dir", str(plots)]
        )
        assert result.exit_code == 0
        assert out.read_text() == GOLDEN.joinpath("sweep_default.csv").read_text()
        made = sorted(p.name for p in plots.iterdir())
        assert made == [
            "sweep_altitude_km.svg",
            "sweep_chunk_processing_s.svg",
            "sweep_kvc_mb.svg",
            "sweep_servers.svg",
        ]
        for name in made:
            assert plots.joinpath(name).read_text().startswith("<svg")

    def test_config_file_round_trip(self, runner, tmp_path):
        config = tmp_path / "table.cfg"
        config.write_text(
            "KVC_BYTES=2..21\n"
            "SERVERS=9..81\n"
            "CHUNK_PROCESSING_TIME=0.002..0.02\n"
            "ALTITUDE=160..2000\n"
            "MAX_SATELLITES=15\n"
            "MAX_ORBS=15\n"
            "CENTER_SATELLITE=8\n"
            "CENTER_ORB=8\n"
        )
        result = runner.invoke(main, ["sweep", "--config", str(config)])
        assert result.exit_code == 0
        # the defaults mirror this exact table
        assert result.output == GOLDEN.joinpath("sweep_default.csv").read_text()

    def test_malformed_config_rejected(self, runner, tmp_path):
        config = tmp_path / "bad.cfg"
        config.write_text("NOT_A_KEY=5\n")
        result = runner.invoke(main, ["sweep", "--config", str(config)])
        assert result.exit_code == 2
        assert "unknown key" in result.output or "unknown key" in (result.stderr or "")

    def test_config_parse_helpers(self, tmp_path):
        config = tmp_path / "partial.cfg"
        config.write_text("ALTITUDE=500\nSERVERS=9..18  # trailing comment\n")
        base, values = load_sweep_config(str(config))
        assert base.spec.altitude_m == 500_000.0
        assert values["servers"][0] == 9.0 and values["servers"][-1] == 18.0

        bad = tmp_path / "noval.cfg"
        bad.write_text("SERVERS\n")
        with pytest.raises(ScenarioParseError):
            load_sweep_config(str(bad))


class TestRenderCommand:
    @pytest.mark.parametrize(
        "strategy", ["rotation_aware", "hop_aware", "rotation_hop_aware"]
    )
    @pytest.mark.parametrize("size", ["3", "5", "7", "9"])
    def test_ascii_matches_golden(self, runner, strategy, size):
        result = runner.invoke(main, ["render", "--strategy", strategy, "--size", size])
        assert result.exit_code == 0
        want = GOLDEN.joinpath(f"render_{strategy}_{size}.txt").read_text()
        assert result.output == want

    def test_svg_matches_golden(self, runner):
        result = runner.invoke(
            main,
            ["render", "--strategy", "rotation_hop_aware", "--size", "9", "--format", "svg"],
        )
        assert result.exit_code == 0
        want = GOLDEN.joinpath("render_rotation_hop_aware_9.svg").read_text()
        assert result.output == want

    def test_center_label_is_one_for_hop_strategies(self, runner):
        result = runner.invoke(main, ["render", "--strategy", "hop_aware", "--size", "3"])
        assert "(1)" in result.output

    def test_bad_size_rejected(self, runner):
        result = runner.invoke(main, ["render", "--strategy", "hop_aware", "--size", "4"])
        assert result.exit_code != 0


SCRIPT = """\
# round trip with rotation and eviction
grid 15 15 550000
servers 10 rotation_hop_aware
block-size 8
chunk-bytes 256
add p1 32 2000
expect stored 4
get p1
expect blocks 4
expect bytes 8000
rotate 1
get p1
expect blocks 4
expect bytes 8000
add p2 16 1500 extends p1
get p2
expect blocks 6
evict p1 2
get p1
expect blocks 2
"""


class TestScenarioCommand:
    def test_sim_transport_passes(self, runner, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text(SCRIPT)
        result = runner.invoke(main, ["scenario", str(script), "--transport", "sim"])
        assert result.exit_code == 0, result.output
        assert "SCENARIO OK" in result.output

    def test_report_includes_store_counters(self, runner, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text(SCRIPT)
        result = runner.invoke(main, ["scenario", str(script), "--transport", "sim"])
        counters = [l for l in result.output.splitlines() if l.startswith("counters:")]
        assert len(counters) == 1
        for field in ("epoch=", "probes=", "hits=", "misses=", "evictions="):
            assert field in counters[0]

    def test_failing_expectation_sets_exit_code(self, runner, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text(
            "block-size 8\nservers 4\nadd p 8 100\nget p\nexpect blocks 2\n"
        )
        result = runner.invoke(main, ["scenario", str(script)])
        assert result.exit_code == 1
        assert "FAIL" in result.output

    def test_parse_error_reports_line(self, runner, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text("servers 4\nfrobnicate 1\n")
        result = runner.invoke(main, ["scenario", str(script)])
        assert result.exit_code == 2
        assert "2" in result.output  # line number in diagnostic

    def test_unknown_prompt_rejected(self, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text("get nothere\n")
        with pytest.raises(ScenarioParseError):
            parse_scenario(str(script))
            run_scenario(str(script), "sim", 0, echo=lambda *_: None)

    def test_transport_equivalence_small(self, tmp_path):
        # identical digests across the simulated and datagram transports
        script = tmp_path / "s.txt"
        script.write_text(SCRIPT)
        sim_lines: list[str] = []
        udp_lines: list[str] = []
        assert run_scenario(str(script), "sim", 3, echo=sim_lines.append)
        assert run_scenario(str(script), "udp", 3, echo=udp_lines.append)

        def gets(lines):
            return [
                " ".join(part for part in line.split() if not part.startswith("latency"))
                for line in lines
                if line.startswith("get ")
            ]

        assert gets(sim_lines) == gets(udp_lines)

    def test_seed_changes_tokens_not_structure(self, runner, tmp_path):
        script = tmp_path / "s.txt"
        script.write_text("block-size 8\nservers 4\nadd p 16 64\nget p\nexpect blocks 2\n")
        a = runner.invoke(main, ["scenario", str(script), "--seed", "1"])
        b = runner.invoke(main, ["scenario", str(script), "--seed", "2"])
        assert a.exit_code == 0 and b.exit_code == 0
        digest_a = [l for l in a.output.splitlines() if l.startswith("get")]
        digest_b = [l for l in b.output.splitlines() if l.startswith("get")]
        assert digest_a != digest_b  # different seeds, different payloads


class TestNodeCommand:
    def test_node_help_lists_flags(self, runner):
        result = runner.invoke(main, ["node", "--help"])
        assert result.exit_code == 0
        for flag in ("--bind", "--coord", "--capacity", "--neighbors"):
            assert flag in result.output

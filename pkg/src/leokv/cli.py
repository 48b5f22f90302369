"""Operator command line: sweeps, grid renders, scripted scenarios, nodes.

Scenario scripts are line-oriented; blank lines and ``#`` comments are
skipped, anything unparseable fails with its line number. Commands:

    grid PLANES SATS ALTITUDE_M      constellation (default 15 15 1080000)
    servers N [STRATEGY]             logical servers and placement strategy
    block-size TOKENS                tokens per block (default 128)
    chunk-bytes BYTES                chunk size (default 6144)
    capacity BYTES                   per-satellite store capacity
    add NAME NTOKENS BYTES [extends PARENT]
                                     cache a prompt; tokens are derived from
                                     the seed and NAME, payloads per block
                                     from each block key, so runs and
                                     transports agree byte-for-byte
    get NAME                         fetch; prints blocks/bytes/digest/latency
    rotate K                         K handoff steps with migrations
    evict NAME INDEX                 purge block INDEX of NAME and successors
    expect blocks N | bytes N | digest HEX | stored N
                                     assert on the най recent get/add

Sweep config files use the simulation parameter names, one ``KEY=VALUE`` per
line, ranges as ``lo..hi``:

    KVC_BYTES=2..21            (MB)         SERVERS=9..81
    CHUNK_PROCESSING_TIME=0.002..0.02 (s)   ALTITUDE=160..2000 (km)
    MAX_SATELLITES=15  MAX_ORBS=15  CENTER_SATELLITE=8  CENTER_ORB=8
"""

import hashlib
import random
import sys

import click

from .blockcodec import prompt_keys
from .geometry import ConstellationSpec
from .mapping import (
    ROTATION_AWARE,
    STRATEGIES,
    LosWindow,
    build_plan,
    locate_server,
    render_ascii,
    render_svg,
)
from .netnode import NodeConfig, StoreNode, UdpBackend, spawn_local_nodes
from .simnet import SimConfig, SimNetwork, run_sweep, sweep_to_csv, sweep_values
from .topology import SatCoord


class ScenarioParseError(Exception):
    pass


@click.group()
def main() -> None:
    """Constellation-striped chunk cache toolkit."""


# -- sweep ---------------------------------------------------------------


def _parse_scalar_or_range(text: str) -> tuple[float, float]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return float(lo), float(hi)
    v = float(text)
    return v, v


def load_sweep_config(path: str) -> tuple[SimConfig, dict[str, list[float]]]:
    """Parse a KEY=VALUE sweep file into a base config and sweep grids."""
    settings: dict[str, tuple[float, float]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ScenarioParseError(f"{path}:{lineno}: expected KEY=VALUE")
            key, value = (part.strip() for part in line.split("=", 1))
            known = {
                "KVC_BYTES",
                "SERVERS",
                "CHUNK_PROCESSING_TIME",
                "ALTITUDE",
                "MAX_SATELLITES",
                "MAX_ORBS",
                "CENTER_SATELLITE",
                "CENTER_ORB",
            }
            if key not in known:
                raise ScenarioParseError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                settings[key] = _parse_scalar_or_range(value)
            except ValueError as exc:
                raise ScenarioParseError(f"{path}:{lineno}: {exc}") from exc

    planes = int(settings.get("MAX_ORBS", (15, 15))[0])
    sats = int(settings.get("MAX_SATELLITES", (15, 15))[0])
    center = SatCoord(
        int(settings.get("CENTER_ORB", (8, 8))[0]) - 1,
        int(settings.get("CENTER_SATELLITE", (8, 8))[0]) - 1,
    )
    alt_range = settings.get("ALTITUDE", (160.0, 2000.0))
    kvc_range = settings.get("KVC_BYTES", (2.0, 21.0))
    servers_range = settings.get("SERVERS", (9.0, 81.0))
    proc_range = settings.get("CHUNK_PROCESSING_TIME", (0.002, 0.02))

    base = SimConfig(
        spec=ConstellationSpec(
            planes, sats, 1000.0 * (alt_range[0] + alt_range[1]) / 2
        ),
        center=center,
        n_servers=int((servers_range[0] + servers_range[1]) / 2),
        kvc_bytes=int(1_000_000 * (kvc_range[0] + kvc_range[1]) / 2),
        chunk_processing_s=(proc_range[0] + proc_range[1]) / 2,
    )
    values = sweep_values(
        altitude_km=alt_range,
        kvc_mb=kvc_range,
        servers=(int(servers_range[0]), int(servers_range[1])),
        chunk_processing_s=proc_range,
    )
    return base, values


def _plot_svg(parameter: str, rows) -> str:
    """Minimal deterministic line chart of max latency per strategy."""
    width, height, pad = 480, 300, 40
    series: dict[str, list[tuple[float, float]]] = {}
    for row in rows:
        series.setdefault(row.strategy, []).append((row.value, row.max_latency_s))
    xs = sorted({row.value for row in rows})
    ymax = max(row.max_latency_s for row in rows)
    colors = {s: c for s, c in zip(STRATEGIES, ("#d62728", "#1f77b4", "#2ca02c"))}

    def sx(x: float) -> float:
        span = (xs[-1] - xs[0]) or 1.0
        return pad + (x - xs[0]) / span * (width - 2 * pad)

    def sy(y: float) -> float:
        return height - pad - y / ymax * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{width / 2:g}" y="16" text-anchor="middle" font-size="13">'
        f"max one-way latency vs {parameter}</text>",
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="#000"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#000"/>',
    ]
    for strategy, points in series.items():
        path = " ".join(
            f"{'M' if i == 0 else 'L'}{sx(x):.1f},{sy(y):.1f}"
            for i, (x, y) in enumerate(points)
        )
        parts.append(
            f'<path d="{path}" fill="none" stroke="{colors[strategy]}" '
            f'stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--output", "-o", type=click.Path(), default="-")
@click.option(
    "--plot-dir",
    type=click.Path(file_okay=False),
    default=None,
    help="Also write one SVG line chart per swept parameter.",
)
def sweep(config_path: str | None, output: str, plot_dir: str | None) -> None:
    """Run the latency parameter sweep and emit CSV."""
    try:
        if config_path:
            base, values = load_sweep_config(config_path)
        else:
            base, values = SimConfig(), sweep_values()
    except ScenarioParseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    rows = run_sweep(base, values)
    csv_text = sweep_to_csv(rows)
    if output == "-":
        click.echo(csv_text, nl=False)
    else:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(csv_text)
    if plot_dir:
        import pathlib

        directory = pathlib.Path(plot_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for parameter in values:
            subset = [row for row in rows if row.parameter == parameter]
            (directory / f"sweep_{parameter}.svg").write_text(
                _plot_svg(parameter, subset), encoding="utf-8"
            )


# -- render -----------------------------------------------------------------


@main.command()
@click.option("--strategy", type=click.Choice(STRATEGIES), required=True)
@click.option("--size", type=click.Choice(["3", "5", "7", "9"]), required=True)
@click.option("--format", "fmt", type=click.Choice(["ascii", "svg"]), default="ascii")
@click.option("--output", "-o", type=click.Path(), default="-")
def render(strategy: str, size: str, fmt: str, output: str) -> None:
    """Draw a placement grid (server labels are 1-based, center circled)."""
    side = int(size)
    spec = ConstellationSpec(15, 15, 550_000.0)
    center = SatCoord(7, 7)
    window = LosWindow(center, side // 2, side // 2) if strategy == ROTATION_AWARE else None
    plan = build_plan(strategy, center, side * side, spec, window=window)
    if fmt == "ascii":
        text = f"# {strategy} {side}x{side} n={side * side}\n"
        text += render_ascii(plan, spec)
    else:
        text = render_svg(plan, spec)
    if output == "-":
        click.echo(text, nl=False)
    else:
        with open(output, "w", encoding="utf-8") as handle:
            handle.write(text)


# -- scenario ----------------------------------------------------------------


def _block_payload(key: bytes, size: int, seed: int) -> bytes:
    return random.Random(key + seed.to_bytes(8, "big")).randbytes(size)


def _prompt_tokens(name: str, count: int, seed: int, parent: list[int] | None) -> list[int]:
    rng = random.Random(f"{seed}:{name}")
    fresh = [rng.randrange(1 << 20) for _ in range(count)]
    return (list(parent) + fresh) if parent else fresh


def parse_scenario(path: str) -> list[tuple[int, list[str]]]:
    commands = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            words = line.split()
            verbs = {
                "grid",
                "servers",
                "block-size",
                "chunk-bytes",
                "capacity",
                "add",
                "get",
                "rotate",
                "evict",
                "expect",
            }
            if words[0] not in verbs:
                raise ScenarioParseError(f"{path}:{lineno}: unknown command {words[0]!r}")
            commands.append((lineno, words))
    return commands


class _ScenarioState:
    def __init__(self, seed: int) -> None:
        self.seed = seed
        self.planes = 15
        self.sats = 15
        self.altitude_m = 1_080_000.0
        self.n_servers = 9
        self.strategy = "rotation_hop_aware"
        self.block_size = 128
        self.chunk_bytes = 6144
        self.capacity = 1 << 32
        self.rotations = 0
        self.prompts: dict[str, list[int]] = {}
        self.adds: list[tuple[str, int]] = []  # name, payload bytes per block


def _preparse(commands, seed: int) -> _ScenarioState:
    """First pass: settings, prompt construction, and rotation count."""
    state = _ScenarioState(seed)
    for lineno, words in commands:
        verb, args = words[0], words[1:]
        try:
            if verb == "grid":
                state.planes, state.sats = int(args[0]), int(args[1])
                state.altitude_m = float(args[2])
            elif verb == "servers":
                state.n_servers = int(args[0])
                if len(args) > 1:
                    if args[1] not in STRATEGIES:
                        raise ValueError(f"unknown strategy {args[1]!r}")
                    state.strategy = args[1]
            elif verb == "block-size":
                state.block_size = int(args[0])
            elif verb == "chunk-bytes":
                state.chunk_bytes = int(args[0])
            elif verb == "capacity":
                state.capacity = int(args[0])
            elif verb == "rotate":
                state.rotations += int(args[0])
            elif verb == "add":
                name, count, nbytes = args[0], int(args[1]), int(args[2])
                parent = None
                if len(args) >= 5 and args[3] == "extends":
                    parent = state.prompts[args[4]]
                state.prompts[name] = _prompt_tokens(name, count, seed, parent)
                state.adds.append((name, nbytes))
            elif verb in ("get", "evict"):
                if args[0] not in state.prompts:
                    raise ValueError(f"unknown prompt {args[0]!r}")
            elif verb == "expect":
                if args[0] not in ("blocks", "bytes", "digest", "stored"):
                    raise ValueError(f"unknown expectation {args[0]!r}")
        except (IndexError, ValueError, KeyError) as exc:
            raise ScenarioParseError(f"line {lineno}: {exc}") from exc
    return state


def run_scenario(path: str, transport: str, seed: int, echo=click.echo) -> bool:
    """Execute a script; returns True when every expectation held."""
    from .protocol import KvcManager, KvcManagerConfig

    commands = parse_scenario(path)
    state = _preparse(commands, seed)
    spec = ConstellationSpec(state.planes, state.sats, state.altitude_m)
    center = SatCoord(state.planes // 2, state.sats // 2)
    config = KvcManagerConfig(
        n_servers=state.n_servers,
        strategy=state.strategy,
        block_size_tokens=state.block_size,
        chunk_bytes=state.chunk_bytes,
    )

    stop = None
    if transport == "sim":
        backend = SimNetwork(
            SimConfig(
                spec=spec,
                center=center,
                n_servers=state.n_servers,
                chunk_bytes=state.chunk_bytes,
            ),
            capacity_bytes=state.capacity,
        )
    else:
        plan0 = build_plan(state.strategy, center, state.n_servers, spec)
        coords = {
            locate_server(plan0, sid, k, spec)
            for sid in plan0.assignments
            for k in range(state.rotations + 1)
        }
        node_map, stop, _threads = spawn_local_nodes(
            sorted(coords),
            capacity_bytes=state.capacity,
            grid=(state.planes, state.sats),
        )
        backend = UdpBackend(node_map)

    manager = KvcManager(config, backend, spec, center)
    failures = 0
    last_get = None
    last_stored = None
    try:
        for _lineno, words in commands:
            verb, args = words[0], words[1:]
            if verb == "add":
                name = args[0]
                nbytes = int(args[2])
                tokens = state.prompts[name]
                keys = prompt_keys(tokens, state.block_size)
                payloads = [_block_payload(k, nbytes, seed) for k in keys]
                last_stored = manager.add_blocks(tokens, payloads)
                echo(f"add {name}: blocks={len(keys)} stored={last_stored}")
            elif verb == "get":
                name = args[0]
                result = manager.get_cache(state.prompts[name])
                joined = b"".join(result.payloads)
                digest = hashlib.sha256(joined).hexdigest()[:16]
                last_get = (result.matched_blocks, len(joined), digest)
                echo(
                    f"get {name}: blocks={result.matched_blocks} "
                    f"bytes={len(joined)} digest={digest} "
                    f"latency_s={result.fetch_latency_s:.6f}"
                )
            elif verb == "rotate":
                manager.advance_rotation(int(args[0]))
                echo(f"rotate {args[0]} -> epoch {manager.epoch}")
            elif verb == "evict":
                name, block_index = args[0], int(args[1])
                manager.evict_block_at(state.prompts[name], block_index)
                echo(f"evict {name} block {block_index}")
            elif verb == "expect":
                kind, want = args[0], args[1]
                if kind == "stored":
                    got = last_stored
                elif last_get is None:
                    got = None
                else:
                    got = {
                        "blocks": last_get[0],
                        "bytes": last_get[1],
                        "digest": last_get[2],
                    }[kind]
                ok = str(got) == want
                if not ok:
                    failures += 1
                echo(f"{'ok    ' if ok else 'FAIL  '}expect {kind}={want} got={got}")
    finally:
        if stop is not None:
            stop.set()
    tally = f"counters: epoch={manager.epoch} probes={backend.probe_count}"
    if isinstance(backend, SimNetwork):
        totals = {"hits": 0, "misses": 0, "evictions": 0, "used_bytes": 0}
        for satellite in backend.stores.values():
            snap = satellite.snapshot()
            for field in totals:
                totals[field] += snap[field]
        tally += "".join(f" {field}={value}" for field, value in totals.items())
    echo(tally)
    if failures:
        echo(f"SCENARIO FAILED ({failures} expectation(s))")
        return False
    echo("SCENARIO OK")
    return True


@main.command()
@click.argument("script", type=click.Path(exists=True))
@click.option("--transport", type=click.Choice(["sim", "udp"]), default="sim")
@click.option("--seed", type=int, default=0)
def scenario(script: str, transport: str, seed: int) -> None:
    """Run a scripted add/rotate/get/evict scenario."""
    try:
        ok = run_scenario(script, transport, seed)
    except ScenarioParseError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0 if ok else 1)


# -- node ---------------------------------------------------------------------


def _parse_addr(text: str) -> tuple[str, int]:
    host, port = text.rsplit(":", 1)
    return host, int(port)


@main.command()
@click.option("--bind", required=True, help="host:port to listen on")
@click.option("--coord", required=True, help="grid position as plane:index")
@click.option("--capacity", type=int, default=1 << 30)
@click.option("--neighbors", default="", help="comma-separated host:port list")
@click.option("--ttl", type=int, default=8, help="eviction gossip hop budget")
def node(bind: str, coord: str, capacity: int, neighbors: str, ttl: int) -> None:
    """Serve one store node until interrupted."""
    plane, index = (int(part) for part in coord.split(":", 1))
    neighbor_addrs = tuple(
        _parse_addr(part) for part in neighbors.split(",") if part.strip()
    )
    config = NodeConfig(
        bind=_parse_addr(bind),
        coord=SatCoord(plane, index),
        capacity_bytes=capacity,
        neighbors=neighbor_addrs,
        notice_ttl=ttl,
    )
    server = StoreNode(config)
    click.echo(f"node {server.config.coord} listening on {server.address}", err=True)
    try:
        server.serve()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()

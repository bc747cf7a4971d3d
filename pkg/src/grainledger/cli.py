"""gl: operator command line.

Subcommands: init (materialize a network from a topology), node run /
network run (serve nodes + APIs), scenario gen / scenario run (demo data),
verify (chain and signature audit, cross-node convergence).

Exit codes: 0 success, 1 runtime or verification failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import errno
import json
import os
import signal
import sys
import threading
from decimal import Decimal

from grainledger import api as api_mod, identity as ids, ledger, network, scenario
from grainledger.canonical import canonical_dumps, canonical_loads
from grainledger.errors import GrainLedgerError, NonCanonicalizable

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def _echo(message: str = "") -> None:
    print(message, flush=True)


def _fail(message: str, code: int) -> int:
    print("error: " + message, file=sys.stderr, flush=True)
    return code


# --- init ----------------------------------------------------------------------

def _default_passwords(participants: list[dict]) -> dict[str, str]:
    return {
        p["participant_id"]: p.get("password", p["participant_id"] + "-pw")
        for p in participants
    }


def _write_node_files(net: network.Network, root: str) -> list[str]:
    participants = net.topology.get("participants", [])
    passwords = _default_passwords(participants)
    lines = []
    for node_conf in net.topology["nodes"]:
        node_id = node_conf["node_id"]
        node_dir = os.path.join(root, node_id)
        keys_dir = os.path.join(node_dir, "keys")
        os.makedirs(keys_dir, exist_ok=True)

        node_doc = dict(node_conf)
        node_doc["network_root"] = ".."
        with open(os.path.join(node_dir, "node.json"), "wb") as fh:
            fh.write(canonical_dumps(node_doc))

        with open(os.path.join(keys_dir, "node.key"), "w") as fh:
            fh.write(net.node_keys[node_id].private_hex + "\n")

        org_participants = [
            p for p in participants if p["org"] == node_conf["org"]
        ]
        for participant in org_participants:
            pid = participant["participant_id"]
            keypair = net.participant_keys[pid]
            with open(os.path.join(keys_dir, pid + ".key"), "w") as fh:
                fh.write(keypair.private_hex + "\n")
            identity_doc = {
                "participant_id": pid,
                "scheme": ids.SCHEME_ED25519,
                "public_key": keypair.public_hex,
                "issued_at": 0,
            }
            with open(os.path.join(keys_dir, pid + ".identity.json"), "wb") as fh:
                fh.write(canonical_dumps(identity_doc))

        credentials = api_mod.build_credentials(org_participants, passwords)
        with open(os.path.join(node_dir, "credentials.json"), "w") as fh:
            json.dump(credentials, fh, indent=2)

        users = ", ".join(
            "%s/%s" % (p["participant_id"], passwords[p["participant_id"]])
            for p in org_participants
        ) or "(none)"
        lines.append("%-16s %-12s %-18s users: %s" % (
            node_id, node_conf["org"], node_conf.get("listen_addr", "-"), users
        ))
    return lines


def cmd_init(args) -> int:
    root = args.out
    if os.path.isdir(root) and os.listdir(root) and not args.force:
        return _fail("output dir %r is not empty (use --force)" % root, EXIT_USAGE)
    if args.topology:
        try:
            topology = network.load_topology(args.topology)
        except (OSError, NonCanonicalizable) as exc:
            return _fail("invalid topology file: %s" % exc, EXIT_USAGE)
    else:
        topology = network.DEFAULT_TOPOLOGY
    if args.seed is not None:
        topology = dict(topology)
        topology["seed"] = args.seed
    try:
        net = network.Network(topology, root_dir=root, mode="deterministic")
        net.bootstrap()
    except (GrainLedgerError, ValueError, KeyError) as exc:
        return _fail("topology rejected: %s" % exc, EXIT_USAGE)
    network.dump_topology(net.topology, os.path.join(root, "topology.json"))
    lines = _write_node_files(net, root)
    if args.json:
        _echo(canonical_dumps({
            "root": root,
            "seed": net.seed,
            "nodes": [n["node_id"] for n in net.topology["nodes"]],
            "channels": [c["channel_id"] for c in net.topology["channels"]],
        }).decode())
    else:
        _echo("initialized network at %s (seed %s)" % (root, net.seed))
        for line in lines:
            _echo("  " + line)
        _echo("note: keys are derived from the topology seed;"
              " fixture use only, not production key hygiene")
    return EXIT_OK


# --- node / network run ---------------------------------------------------------

def _load_network_from_dir(root: str) -> network.Network:
    topology = network.load_topology(os.path.join(root, "topology.json"))
    net = network.Network(topology, root_dir=root, mode="threaded")
    _load_keyfiles(net, root)
    net.bootstrap()
    return net


def _load_keyfiles(net: network.Network, root: str) -> None:
    for node_conf in net.topology["nodes"]:
        keys_dir = os.path.join(root, node_conf["node_id"], "keys")
        if not os.path.isdir(keys_dir):
            continue
        for name in os.listdir(keys_dir):
            if not name.endswith(".key"):
                continue
            with open(os.path.join(keys_dir, name)) as fh:
                keypair = ids.KeyPair.from_private_hex(fh.read().strip())
            if name == "node.key":
                net.node_keys[node_conf["node_id"]] = keypair
            else:
                net.participant_keys[name[:-4]] = keypair


class _RootLock:
    """One process drives a network root; concurrent runs would double-commit."""

    def __init__(self, root: str):
        self.path = os.path.join(root, ".gl.lock")
        self.acquired = False

    def acquire(self) -> bool:
        for _ in range(2):
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, str(os.getpid()).encode())
                os.close(fd)
                self.acquired = True
                return True
            except OSError as exc:
                if exc.errno != errno.EEXIST:
                    raise
                try:
                    with open(self.path) as fh:
                        pid = int(fh.read().strip() or 0)
                except (OSError, ValueError):
                    pid = 0
                if pid and os.path.isdir("/proc/%d" % pid):
                    return False
                try:  # stale lock
                    os.unlink(self.path)
                except OSError:
                    return False
        return False

    def release(self) -> None:
        if self.acquired:
            try:
                os.unlink(self.path)
            except OSError:
                pass


def _keyring_for(node_dir: str) -> dict[str, ids.KeyPair]:
    keyring = {}
    keys_dir = os.path.join(node_dir, "keys")
    if os.path.isdir(keys_dir):
        for name in os.listdir(keys_dir):
            if name.endswith(".key") and name != "node.key":
                with open(os.path.join(keys_dir, name)) as fh:
                    keyring[name[:-4]] = ids.KeyPair.from_private_hex(
                        fh.read().strip()
                    )
    return keyring


def _serve(node_dirs: list[str], root: str) -> int:
    lock = _RootLock(root)
    if not lock.acquire():
        return _fail("network at %s is already being served" % root, EXIT_FAILURE)
    servers = []
    net = None
    sync_stop = threading.Event()
    try:
        try:
            net = _load_network_from_dir(root)
        except (OSError, GrainLedgerError, ValueError, KeyError) as exc:
            return _fail("cannot load network: %s" % exc, EXIT_FAILURE)
        for node_dir in node_dirs:
            with open(os.path.join(node_dir, "node.json"), "rb") as fh:
                node_conf = canonical_loads(fh.read())
            node = net.nodes[node_conf["node_id"]]
            credentials_path = os.path.join(node_dir, "credentials.json")
            credentials = (
                api_mod.load_credentials(credentials_path)
                if os.path.exists(credentials_path) else {"users": []}
            )
            listen = os.environ.get("GL_LISTEN_ADDR") if len(node_dirs) == 1 \
                else None
            listen = listen or node_conf.get("listen_addr", "127.0.0.1:0")
            ui_dir = os.environ.get("GL_UI_DIR") or _default_ui_dir()
            node_api = api_mod.NodeApi(
                node, net, credentials, _keyring_for(node_dir), ui_dir=ui_dir
            )
            try:
                server = api_mod.ApiServer(node_api, listen)
            except OSError as exc:
                return _fail(
                    "cannot bind %s for %s: %s" % (listen, node.node_id, exc),
                    EXIT_FAILURE,
                )
            server.start()
            servers.append(server)
            _echo("%s (%s) serving on http://%s" % (
                node.node_id, node.org, listen.replace(":0", ":%d" % server.port)
            ))

        def sync_loop():
            while not sync_stop.wait(0.5):
                for node in net.nodes.values():
                    node.sync_all()

        syncer = threading.Thread(target=sync_loop, daemon=True)
        syncer.start()

        stop = threading.Event()

        def on_signal(_sig, _frame):
            stop.set()

        signal.signal(signal.SIGINT, on_signal)
        signal.signal(signal.SIGTERM, on_signal)
        while not stop.is_set():
            stop.wait(0.2)
        _echo("shutting down")
        return EXIT_OK
    finally:
        sync_stop.set()
        for server in servers:
            server.stop()
        if net is not None:
            net.stop()
        lock.release()


def _default_ui_dir() -> str | None:
    here = os.path.dirname(os.path.abspath(__file__))
    for candidate in (
        os.path.join(here, "ui"),
        os.path.join(os.getcwd(), "frontend", "dist"),
    ):
        if os.path.isdir(candidate):
            return candidate
    return None


def cmd_node_run(args) -> int:
    node_dir = args.node_dir or os.environ.get("GL_DATA_DIR")
    if not node_dir and os.environ.get("GL_NODE_CONFIG"):
        node_dir = os.path.dirname(os.path.abspath(os.environ["GL_NODE_CONFIG"]))
    if not node_dir:
        return _fail("node directory required (or set GL_NODE_CONFIG)", EXIT_USAGE)
    node_dir = os.path.abspath(node_dir)
    if not os.path.exists(os.path.join(node_dir, "node.json")):
        return _fail("%s has no node.json (run gl init first)" % node_dir,
                     EXIT_USAGE)
    with open(os.path.join(node_dir, "node.json"), "rb") as fh:
        node_conf = canonical_loads(fh.read())
    root = os.path.abspath(
        os.path.join(node_dir, node_conf.get("network_root", ".."))
    )
    return _serve([node_dir], root)


def cmd_network_run(args) -> int:
    root = os.path.abspath(args.root_dir)
    if not os.path.exists(os.path.join(root, "topology.json")):
        return _fail("%s has no topology.json (run gl init first)" % root,
                     EXIT_USAGE)
    topology = network.load_topology(os.path.join(root, "topology.json"))
    node_dirs = [
        os.path.join(root, node["node_id"]) for node in topology["nodes"]
    ]
    return _serve(node_dirs, root)


# --- scenario ---------------------------------------------------------------------

def cmd_scenario_gen(args) -> int:
    rows = scenario.generate_rows(args.rows, seed=args.seed, silos=args.silos)
    scenario.write_csv(rows, args.out)
    _echo("wrote %d rows to %s (seed %d, %d silos)"
          % (len(rows), args.out, args.seed, args.silos))
    return EXIT_OK


def cmd_scenario_run(args) -> int:
    try:
        rows = scenario.read_csv(args.csv)
    except (OSError, KeyError, ValueError) as exc:
        return _fail("cannot read scenario: %s" % exc, EXIT_USAGE)
    client = scenario.ApiClient(args.against)
    try:
        client.login(args.username, args.password)
    except Exception as exc:  # connection/auth failures
        return _fail("login failed: %s" % exc, EXIT_FAILURE)
    runner = scenario.ScenarioRunner(
        client, base_price=Decimal(args.base_price),
        discount_mode=args.mode,
    )
    report = runner.run(rows)
    if args.json:
        _echo(canonical_dumps(report).decode())
    else:
        for row in report["rows"]:
            steps = row["steps"]
            if row["ok"]:
                tx_ids = [s.get("tx_id", "-")[:12] for s in steps.values()]
                _echo("%-10s ok   silo=%-4s txs: %s"
                      % (row["invoice"], row["silo"], " ".join(tx_ids)))
            else:
                bad = next(
                    (op, s) for op, s in steps.items()
                    if s["status"] != "VALID"
                )
                _echo("%-10s FAIL %s: %s %s"
                      % (row["invoice"], bad[0], bad[1]["status"],
                         bad[1].get("reason") or ""))
        for lot in report["lots"]:
            _echo("lot %-10s %s" % (
                lot.get("lot_id", lot["silo"]), "ok" if lot["ok"] else "FAIL"
            ))
    return EXIT_OK if report["ok"] else EXIT_FAILURE


# --- verify -----------------------------------------------------------------------

def _governance_view_from_dir(node_dir: str) -> ledger.GovernanceView | None:
    path = os.path.join(node_dir, "channels", "governance", "blocks.log")
    if not os.path.exists(path):
        return None
    state = ledger.WorldState()
    try:
        for block in ledger.iter_block_records(path):
            for index, tx_record in enumerate(block["transactions"]):
                if not tx_record.get("valid"):
                    continue
                for key, value in tx_record["rwset"]["writes"]:
                    state.put(key, value, (block["height"], index))
    except (ledger.BlockRecordError, KeyError, TypeError):
        pass  # structural audit below reports the damage
    return ledger.GovernanceView(state)


def verify_node_dir(node_dir: str) -> dict:
    channels_dir = os.path.join(node_dir, "channels")
    if not os.path.isdir(channels_dir):
        return {"node_dir": node_dir, "status": "failed",
                "error": "no channels directory"}
    gov = _governance_view_from_dir(node_dir)
    report = {"node_dir": node_dir, "channels": {}, "status": "intact"}
    for channel_id in sorted(os.listdir(channels_dir)):
        path = os.path.join(channels_dir, channel_id, "blocks.log")
        channel_report = ledger.verify_chain(
            ledger.iter_block_records(path), gov
        )
        tip = ledger.ZERO_DIGEST
        try:
            for block in ledger.iter_block_records(path):
                tip = block.get("digest", "")
        except ledger.BlockRecordError:
            tip = None
        channel_report["tip_digest"] = tip
        report["channels"][channel_id] = channel_report
        if channel_report["status"] != "intact":
            report["status"] = "failed"
    return report


def cmd_verify(args) -> int:
    reports = [verify_node_dir(d) for d in args.node_dirs]
    convergence = {}
    if len(reports) > 1:
        channel_ids = set()
        for report in reports:
            channel_ids.update(report.get("channels", {}))
        for channel_id in sorted(channel_ids):
            tips = {
                report["node_dir"]: report["channels"][channel_id]["tip_digest"]
                for report in reports
                if channel_id in report.get("channels", {})
            }
            convergence[channel_id] = {
                "convergent": len(set(tips.values())) == 1,
                "tips": tips,
            }
    ok = all(r["status"] == "intact" for r in reports) and all(
        c["convergent"] for c in convergence.values()
    )
    if args.json:
        _echo(canonical_dumps({
            "reports": reports,
            "convergence": convergence,
            "status": "intact" if ok else "failed",
        }).decode())
    else:
        for report in reports:
            _echo("%s:" % report["node_dir"])
            if "error" in report:
                _echo("  %s" % report["error"])
                continue
            for channel_id, channel_report in sorted(
                report["channels"].items()
            ):
                if channel_report["status"] == "intact":
                    _echo("  %-12s intact (%d blocks)"
                          % (channel_id, channel_report["blocks_checked"]))
                else:
                    first = channel_report["failures"][0]
                    _echo("  %-12s FAILED at height %s: %s %s"
                          % (channel_id, channel_report["first_bad_height"],
                             first["kind"], first["detail"]))
        for channel_id, entry in convergence.items():
            _echo("%-14s %s" % (
                channel_id,
                "convergent" if entry["convergent"] else "DIVERGENT"
            ))
    return EXIT_OK if ok else EXIT_FAILURE


# --- entry point --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gl", description="GrainLedger network operator tool"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_init = sub.add_parser("init", help="materialize a network from a topology")
    p_init.add_argument("--topology", help="topology JSON (default: built-in 3-node)")
    p_init.add_argument("--out", default="gebn-net", help="output directory")
    p_init.add_argument("--seed", type=int, default=None)
    p_init.add_argument("--force", action="store_true")
    p_init.add_argument("--json", action="store_true")
    p_init.set_defaults(fn=cmd_init)

    p_node = sub.add_parser("node", help="node commands")
    node_sub = p_node.add_subparsers(dest="node_command", required=True)
    p_node_run = node_sub.add_parser("run", help="run one node + its API")
    p_node_run.add_argument("node_dir", nargs="?")
    p_node_run.set_defaults(fn=cmd_node_run)

    p_net = sub.add_parser("network", help="whole-network commands")
    net_sub = p_net.add_subparsers(dest="network_command", required=True)
    p_net_run = net_sub.add_parser("run", help="run every node + API in one process")
    p_net_run.add_argument("root_dir")
    p_net_run.set_defaults(fn=cmd_network_run)

    p_scenario = sub.add_parser("scenario", help="demo data")
    scenario_sub = p_scenario.add_subparsers(dest="scenario_command", required=True)
    p_gen = scenario_sub.add_parser("gen", help="generate a scenario CSV")
    p_gen.add_argument("--rows", type=int, default=10)
    p_gen.add_argument("--seed", type=int, default=7)
    p_gen.add_argument("--silos", type=int, default=2)
    p_gen.add_argument("--out", default="scenario.csv")
    p_gen.set_defaults(fn=cmd_scenario_gen)
    p_run = scenario_sub.add_parser("run", help="drive a scenario against an API")
    p_run.add_argument("csv")
    p_run.add_argument("--against", required=True, help="node API base URL")
    p_run.add_argument("--username", default="p-wh-01")
    p_run.add_argument("--password", default="p-wh-01-pw")
    p_run.add_argument("--base-price", default="1.00")
    p_run.add_argument("--mode", default="corrected",
                       choices=["corrected", "verbatim"])
    p_run.add_argument("--json", action="store_true")
    p_run.set_defaults(fn=cmd_scenario_run)

    p_verify = sub.add_parser("verify", help="chain + signature audit")
    p_verify.add_argument("node_dirs", nargs="+")
    p_verify.add_argument("--json", action="store_true")
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

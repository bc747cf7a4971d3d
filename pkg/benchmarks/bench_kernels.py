"""Benchmark the compiled digest kernels against the pure-Python twins.

Run: python benchmarks/bench_kernels.py [--repeat N]

Workloads mirror the hot paths: canonical serialization of envelopes and
world-state snapshots (hashed on every endorsement, ordering and commit),
merkle roots over block-sized batches, and barcode CRCs.
"""
import argparse
import hashlib
import random
import time
from decimal import Decimal

from grainledger._kernels import pure

try:
    from grainledger._kernels import _speedups
except ImportError:
    _speedups = None


def sample_envelope(n: int) -> dict:
    return {
        "channel_id": "gebn-main",
        "contract_id": "grain",
        "operation": "record_extrinsic",
        "args": {
            "Invoice_Number": "INV-%06d" % n,
            "Sample_Number": "SMP-%06d" % n,
            "Moisture_Percent": Decimal("13.55"),
            "Impurity_Percent": Decimal("2.75"),
            "Broken_Percent": Decimal("4.10"),
            "Greenish_Percent": Decimal("1.00"),
            "Damaged_Percent": Decimal("2.95"),
        },
        "submitter": "p-qa-01",
        "timestamp": 1_700_000_000_000 + n,
    }


def sample_state(keys: int) -> dict:
    rng = random.Random(1)
    return {
        "entries": {
            "com.agritech.Weigh_Ticket#INV-%06d#incoming" % k: {
                "value": {
                    "Invoice_Number": "INV-%06d" % k,
                    "net_kg": Decimal(rng.randrange(20000, 30000)),
                    "producer_id": "p-prod-%02d" % (k % 10),
                },
                "version": [k // 10, k % 10],
            }
            for k in range(keys)
        }
    }


def timed(fn, *args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench(repeat: int) -> None:
    backends = [("pure", pure)]
    if _speedups is not None:
        backends.append(("compiled", _speedups))
    else:
        print("compiled kernels not built; showing pure only")

    envelopes = [sample_envelope(n) for n in range(2000)]
    state = sample_state(3000)
    leaves = [hashlib.sha256(b"%d" % n).digest() for n in range(1024)]
    barcodes = [
        ("GQ1|LOT-%04d|GMO|0.08|2.4|0.9|1.7|0.05|45" % n).encode()
        for n in range(5000)
    ]

    workloads = [
        ("canonical_dumps x2000 envelopes",
         lambda impl: [impl.canonical_dumps(e) for e in envelopes]),
        ("canonical_dumps 3000-key state",
         lambda impl: impl.canonical_dumps(state)),
        ("merkle_root 1024 leaves x100",
         lambda impl: [impl.merkle_root(leaves) for _ in range(100)]),
        ("crc16 x5000 barcodes",
         lambda impl: [impl.crc16_ccitt(b) for b in barcodes]),
    ]

    print("%-36s" % "workload", end="")
    for name, _ in backends:
        print("%12s" % name, end="")
    if len(backends) == 2:
        print("%10s" % "speedup", end="")
    print()
    for title, workload in workloads:
        print("%-36s" % title, end="")
        times = []
        for _name, impl in backends:
            best = timed(workload, impl, repeat=repeat)
            times.append(best)
            print("%10.2fms" % (best * 1e3), end="")
        if len(times) == 2:
            print("%9.2fx" % (times[0] / times[1]), end="")
        print()

    for _name, impl in backends[1:]:
        for envelope in envelopes[:50]:
            assert impl.canonical_dumps(envelope) \
                == pure.canonical_dumps(envelope)
        assert impl.canonical_dumps(state) == pure.canonical_dumps(state)
        print("output parity with pure backend: ok")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    bench(parser.parse_args().repeat)

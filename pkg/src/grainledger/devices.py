"""Lab instrument simulators and strip quantification.

Strip readers quantify analyte concentration through a per-batch
four-parameter logistic standard curve with a closed-form inverse; the
curve parameters travel in a checksummed text barcode. The moisture
analyzer is a seeded simulator so readings replay bit-identically.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

from grainledger.canonical import crc16_ccitt, decimal_text
from grainledger.errors import (
    BadChecksum,
    BadCurve,
    BadFormat,
    DegenerateCurve,
    OutOfRange,
)

BARCODE_MAGIC = "GQ1"


@dataclass(frozen=True)
class StripLot:
    """A strip batch: standard-curve parameters plus the quantifiable range.

    a is the blank response, d the saturation response, c0 the inflection
    concentration and b the slope; the curve is strictly monotone for b>0.
    """

    strip_lot_id: str
    analyte: str
    a: Decimal
    d: Decimal
    c0: Decimal
    b: Decimal
    c_min: Decimal
    c_max: Decimal

    def validate(self) -> None:
        if self.a == self.d:
            raise BadCurve("blank and saturation responses are equal")
        if self.b <= 0:
            raise BadCurve("slope must be positive")
        if self.c0 <= 0:
            raise BadCurve("inflection concentration must be positive")
        if not (0 <= self.c_min < self.c_max):
            raise BadCurve("valid range must satisfy 0 <= c_min < c_max")


@dataclass(frozen=True)
class StripReading:
    strip_lot_id: str
    raw_response: float
    read_at: int


@dataclass(frozen=True)
class SamplePrep:
    sieve_pass_fraction: float
    dilution_sample: int
    dilution_water: int
    extract_volume_ml: float
    incubation_s: int


@dataclass(frozen=True)
class QuantifyResult:
    concentration: float
    flag: str  # ok | below_range | above_range | clamped_low | clamped_high


def validate_prep(prep: SamplePrep) -> list[str]:
    """All violations of the sample-preparation protocol; empty means ok."""
    violations = []
    if not 0.60 <= prep.sieve_pass_fraction <= 0.70:
        violations.append(
            "sieve pass fraction %.3f outside [0.60, 0.70]"
            % prep.sieve_pass_fraction
        )
    if (prep.dilution_sample, prep.dilution_water) != (1, 5):
        violations.append(
            "dilution %d:%d is not 1:5"
            % (prep.dilution_sample, prep.dilution_water)
        )
    if prep.extract_volume_ml != 12:
        violations.append(
            "extract volume %s ml is not 12 ml" % prep.extract_volume_ml
        )
    if prep.incubation_s < 300:
        violations.append(
            "incubation %d s is under 300 s" % prep.incubation_s
        )
    return violations


def curve_response(lot: StripLot, concentration: float) -> float:
    """4PL response: f(c) = d + (a - d) / (1 + (c/c0)^b); f(0) = a."""
    if concentration < 0:
        raise OutOfRange("concentration must be non-negative")
    a, d = float(lot.a), float(lot.d)
    if concentration == 0:
        return a
    ratio = (concentration / float(lot.c0)) ** float(lot.b)
    return d + (a - d) / (1 + ratio)


def quantify(lot: StripLot, reading: StripReading) -> QuantifyResult:
    """Closed-form inverse of the standard curve with range flags."""
    a, d = float(lot.a), float(lot.d)
    if a == d:
        raise DegenerateCurve("curve has no dynamic range")
    y = reading.raw_response
    low, high = min(a, d), max(a, d)
    blank_side_low = a < d  # ascending curve: low responses mean low analyte
    if y <= low:
        return QuantifyResult(0.0 if blank_side_low else float("inf"),
                              "below_range" if blank_side_low else "above_range")
    if y >= high:
        return QuantifyResult(float("inf") if blank_side_low else 0.0,
                              "above_range" if blank_side_low else "below_range")
    concentration = float(lot.c0) * ((a - d) / (y - d) - 1) ** (1 / float(lot.b))
    if concentration < float(lot.c_min):
        return QuantifyResult(float(lot.c_min), "clamped_low")
    if concentration > float(lot.c_max):
        return QuantifyResult(float(lot.c_max), "clamped_high")
    return QuantifyResult(concentration, "ok")


# --- barcode codec ---------------------------------------------------------

def encode_curve_barcode(lot: StripLot) -> str:
    lot.validate()
    payload = "|".join([
        BARCODE_MAGIC,
        lot.strip_lot_id,
        lot.analyte,
        decimal_text(lot.a),
        decimal_text(lot.d),
        decimal_text(lot.c0),
        decimal_text(lot.b),
        decimal_text(lot.c_min),
        decimal_text(lot.c_max),
    ])
    crc = crc16_ccitt(payload.encode("utf-8"))
    return "%s|%04x" % (payload, crc)


def decode_curve_barcode(barcode: str) -> StripLot:
    parts = barcode.split("|")
    if len(parts) != 10 or parts[0] != BARCODE_MAGIC:
        raise BadFormat("expected GQ1|lot|analyte|a|d|c0|b|cmin|cmax|crc")
    payload = "|".join(parts[:9])
    try:
        stated = int(parts[9], 16)
    except ValueError as exc:
        raise BadFormat("checksum is not hex") from exc
    if crc16_ccitt(payload.encode("utf-8")) != stated:
        raise BadChecksum("crc mismatch")
    try:
        lot = StripLot(
            strip_lot_id=parts[1],
            analyte=parts[2],
            a=Decimal(parts[3]),
            d=Decimal(parts[4]),
            c0=Decimal(parts[5]),
            b=Decimal(parts[6]),
            c_min=Decimal(parts[7]),
            c_max=Decimal(parts[8]),
        )
    except InvalidOperation as exc:
        raise BadFormat("curve parameter is not a decimal") from exc
    lot.validate()
    return lot


# --- moisture analyzer ----------------------------------------------------------

@dataclass(frozen=True)
class MoistureReading:
    device_id: str
    value: float
    true_moisture: float
    seed: int
    sequence: int


class MoistureAnalyzer:
    """Seeded moisture device: reading = truth + bias + gaussian noise."""

    def __init__(self, device_id: str, bias: float = 0.0,
                 noise_sd: float = 0.0, seed: int = 0):
        self.device_id = device_id
        self.bias = bias
        self.noise_sd = noise_sd
        self.seed = seed
        self._rng = random.Random(seed)
        self._sequence = 0

    @classmethod
    def from_profile(cls, profile: dict) -> "MoistureAnalyzer":
        return cls(
            device_id=profile["device_id"],
            bias=float(profile.get("bias", 0.0)),
            noise_sd=float(profile.get("noise_sd", 0.0)),
            seed=int(profile.get("seed", 0)),
        )

    def read(self, true_moisture: float) -> MoistureReading:
        if not 0 <= true_moisture <= 40:
            raise OutOfRange(
                "moisture %s%% outside instrument range [0, 40]" % true_moisture
            )
        noise = self._rng.gauss(0.0, self.noise_sd) if self.noise_sd else 0.0
        self._sequence += 1
        return MoistureReading(
            device_id=self.device_id,
            value=true_moisture + self.bias + noise,
            true_moisture=true_moisture,
            seed=self.seed,
            sequence=self._sequence,
        )

"""Token accounting: per-sensor reward factors, weekly settlement, and the
append-only statement ledger.

All settlement money moves in integer milli-tokens. Pool shares are
computed with exact rational arithmetic and rounded down, and every
rounding remainder accrues to the network benefit, so

    gross_charges == sum(owner payouts) + network_benefit

holds exactly for every statement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

MTK_PER_TOKEN = 1000
SECONDS_PER_DAY = 86_400


class RewardError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True)
class RewardParams:
    p_psd: float = 1.0  # tokens per operational day, PSD pipeline
    p_dec: float = 5.0  # tokens per operational day, decoding pipeline
    network_share: float = 0.4  # fraction of decoding value the network keeps
    network_age_days: int = 500
    density_floor: int = 2

    def __post_init__(self):
        if self.p_dec <= 0 or self.p_psd < 0:
            raise RewardError("BAD_PARAMS", "need p_dec > 0 and p_psd >= 0")
        if not 0 <= self.network_share <= 1:
            raise RewardError("BAD_PARAMS", "network_share must be in [0, 1]")
        if self.network_age_days < 1:
            raise RewardError("BAD_PARAMS", "network_age_days must be >= 1")

    @property
    def p_psd_mtk(self) -> int:
        return round(self.p_psd * MTK_PER_TOKEN)

    @property
    def p_dec_mtk(self) -> int:
        return round(self.p_dec * MTK_PER_TOKEN)

    @property
    def share_milli(self) -> int:
        return round(self.network_share * 1000)


@dataclass(frozen=True)
class SensorWeek:
    """One sensor's metered activity inside a settlement window."""

    sensor_id: str
    owner_id: str
    density: int  # sensors sharing the region cell, this one included
    deploy_day: int  # network day the sensor first came online (1-based)
    days_psd: float  # operational days spent producing PSD this week
    days_dec: float  # operational days spent decoding this week

    def validate(self, params: RewardParams) -> None:
        if self.density < 1:
            raise RewardError("DENSITY_ZERO", f"{self.sensor_id}: density < 1")
        if self.days_psd < 0 or self.days_dec < 0:
            raise RewardError("NEGATIVE_TIME", f"{self.sensor_id}: negative days")
        if self.days_psd > 7 or self.days_dec > 7:
            raise RewardError("NEGATIVE_TIME", f"{self.sensor_id}: over 7 days")
        if not 1 <= self.deploy_day <= params.network_age_days:
            raise RewardError("NEGATIVE_TIME", f"{self.sensor_id}: bad deploy day")


def sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def density_factor(density: int, params: RewardParams) -> float:
    """1/ln(density), floored so a lone sensor is not dividing by ln(1)=0."""
    if density < 1:
        raise RewardError("DENSITY_ZERO", "density must be >= 1")
    return 1.0 / math.log(max(density, params.density_floor))


def reward_component(
    price: float, density: int, deploy_day: int, days_on: float, params: RewardParams
) -> float:
    """Continuous reward figure for one pipeline of one sensor (tokens)."""
    return (
        price
        * density_factor(density, params)
        * (params.network_age_days / deploy_day)
        * sigmoid(days_on)
    )


def owner_earnings(r_psd: float, r_dec: float, params: RewardParams) -> float:
    """Owner keeps the PSD value and 1-share of the decoding value."""
    return r_psd + (1.0 - params.network_share) * r_dec


def usage_charge_mtk(dec_seconds: float, params: RewardParams) -> int:
    """What a client owes for a decoding session of the given length."""
    if dec_seconds < 0:
        raise RewardError("NEGATIVE_TIME", "session length cannot be negative")
    num = round(dec_seconds * params.p_dec_mtk) * (1000 + params.share_milli)
    return num // (1000 * SECONDS_PER_DAY)


@dataclass
class PayoutLine:
    sensor_id: str
    owner_id: str
    pipeline: str  # "psd" or "dec"
    amount_mtk: int


@dataclass
class RewardStatement:
    week_id: int
    gross_charges_mtk: int
    pool_psd_mtk: int
    pool_dec_mtk: int
    network_share_mtk: int  # the network's cut of gross, before remainders
    network_benefit_mtk: int  # share plus all rounding remainders
    payouts: list[PayoutLine] = field(default_factory=list)
    factors: dict = field(default_factory=dict)  # sensor_id -> factor breakdown

    def payout_total_mtk(self) -> int:
        return sum(line.amount_mtk for line in self.payouts)

    def to_json(self) -> str:
        return json.dumps(
            {
                "week_id": self.week_id,
                "gross_charges_mtk": self.gross_charges_mtk,
                "pool_psd_mtk": self.pool_psd_mtk,
                "pool_dec_mtk": self.pool_dec_mtk,
                "network_share_mtk": self.network_share_mtk,
                "network_benefit_mtk": self.network_benefit_mtk,
                "payouts": [
                    {
                        "sensor_id": p.sensor_id,
                        "owner_id": p.owner_id,
                        "pipeline": p.pipeline,
                        "amount_mtk": p.amount_mtk,
                    }
                    for p in self.payouts
                ],
                "factors": self.factors,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "RewardStatement":
        obj = json.loads(text)
        return cls(
            week_id=obj["week_id"],
            gross_charges_mtk=obj["gross_charges_mtk"],
            pool_psd_mtk=obj["pool_psd_mtk"],
            pool_dec_mtk=obj["pool_dec_mtk"],
            network_share_mtk=obj["network_share_mtk"],
            network_benefit_mtk=obj["network_benefit_mtk"],
            payouts=[PayoutLine(**p) for p in obj["payouts"]],
            factors=obj.get("factors", {}),
        )


def _split_pool(
    pool_mtk: int, weights: list[tuple[SensorWeek, float]]
) -> tuple[list[tuple[SensorWeek, int]], int]:
    """Floor-allocate a pool by weight; returns (grants, leftover)."""
    total = sum(Fraction(w) for _, w in weights if w > 0)
    if pool_mtk <= 0 or total == 0:
        return [], pool_mtk
    grants = []
    granted = 0
    for week, w in weights:
        if w <= 0:
            continue
        amount = int(pool_mtk * Fraction(w) / total)  # exact rational, floored
        grants.append((week, amount))
        granted += amount
    return grants, pool_mtk - granted


def settle_week(
    weeks: list[SensorWeek], params: RewardParams, week_id: int = 0
) -> RewardStatement:
    """Turn one week of metered sensor activity into a statement."""
    for week in weeks:
        week.validate(params)

    gross = 0
    for week in weeks:
        charge = round(week.days_dec * params.p_dec_mtk) * (1000 + params.share_milli)
        gross += charge // 1000
    share = gross * params.share_milli // 1000
    pool = gross - share
    price_sum = params.p_dec_mtk + params.p_psd_mtk
    pool_dec = pool * params.p_dec_mtk // price_sum
    pool_psd = pool * params.p_psd_mtk // price_sum
    benefit = share + (pool - pool_dec - pool_psd)

    def weight(week: SensorWeek, days: float) -> float:
        if days <= 0:
            return 0.0
        return (
            density_factor(week.density, params)
            * (params.network_age_days / week.deploy_day)
            * sigmoid(days)
        )

    statement = RewardStatement(
        week_id=week_id,
        gross_charges_mtk=gross,
        pool_psd_mtk=pool_psd,
        pool_dec_mtk=pool_dec,
        network_share_mtk=share,
        network_benefit_mtk=0,
    )
    for pipeline, pool_i, day_of in (
        ("psd", pool_psd, lambda w: w.days_psd),
        ("dec", pool_dec, lambda w: w.days_dec),
    ):
        grants, leftover = _split_pool(
            pool_i, [(w, weight(w, day_of(w))) for w in weeks]
        )
        benefit += leftover
        for week, amount in grants:
            statement.payouts.append(
                PayoutLine(week.sensor_id, week.owner_id, pipeline, amount)
            )
    statement.network_benefit_mtk = benefit
    for week in weeks:
        statement.factors[week.sensor_id] = {
            "density": density_factor(week.density, params),
            "deployment": params.network_age_days / week.deploy_day,
            "operational_psd": sigmoid(week.days_psd) if week.days_psd > 0 else 0.0,
            "operational_dec": sigmoid(week.days_dec) if week.days_dec > 0 else 0.0,
        }
    return statement


class Ledger:
    """Append-only statement log; balances are folds over it."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def append(self, statement: RewardStatement) -> None:
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(statement.to_json() + "\n")

    def statements(self) -> list[RewardStatement]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                out.append(RewardStatement.from_json(line))
        return out

    def owner_balances_mtk(self) -> dict[str, int]:
        balances: dict[str, int] = {}
        for statement in self.statements():
            for line in statement.payouts:
                balances[line.owner_id] = (
                    balances.get(line.owner_id, 0) + line.amount_mtk
                )
        return balances

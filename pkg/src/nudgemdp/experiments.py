"""User presets, figure pipelines and the sensitivity harness.

Window patterns checked per preset (states read from far to near):

* myopic / overconfident: B-or-D interventions far out (Window1), then
  gamma-only among the bounded parameters (Window2);
* underconfident / farsighted: same, with p in Window2;
* near the goal any intervention may work (Window3), and the user may act
  unprompted (default-act).

A preset *violates* its pattern when a Window2 state relies on the wrong
bounded parameter or the windows appear out of order.  Empty windows and
far states where nothing works are not violations.  A preset that acts by
default everywhere carries no evidence and is *vacuous*.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .core import DISENGAGED, ParameterError, UserParams, WorldParams
from .interventions import ACTIVE_KINDS, InterventionKind, InterventionProfile, min_effectiveness
from .planner import (
    BD_KINDS,
    DEFAULT_GAMMA_APP,
    AppPolicy,
    WindowDecomposition,
    WindowLabel,
    extract_windows,
    plan,
)

__all__ = [
    "PRESETS",
    "IMPAIRED_PRESETS",
    "PATTERN_KIND",
    "UserPreset",
    "ExperimentConfig",
    "PatternVerdict",
    "pattern_verdict",
    "PolicyMapResult",
    "reproduce_policy_maps",
    "figure_checks",
    "EffectivenessCurves",
    "reproduce_effectiveness_curves",
    "ComparisonReport",
    "underconfident_comparison",
    "SAMPLING_RANGES",
    "TrialResult",
    "SensitivityResult",
    "sample_trial",
    "evaluate_trial",
    "run_sensitivity",
]


@dataclass(frozen=True)
class UserPreset:
    name: str
    overrides: tuple  # (field, value) pairs applied to the base parameters

    def params(self, base: UserParams = UserParams()) -> UserParams:
        return replace(base, **dict(self.overrides))


PRESETS = {
    "default": UserPreset("default", ()),
    "myopic": UserPreset("myopic", (("gamma_user", 0.1),)),
    "farsighted": UserPreset("farsighted", (("gamma_user", 0.9),)),
    "underconfident": UserPreset("underconfident", (("p_user", 0.1),)),
    "overconfident": UserPreset("overconfident", (("p_user", 0.9),)),
}
IMPAIRED_PRESETS = ("myopic", "overconfident", "underconfident", "farsighted")
PATTERN_KIND = {
    "myopic": InterventionKind.ON_GAMMA,
    "overconfident": InterventionKind.ON_GAMMA,
    "underconfident": InterventionKind.ON_P,
    "farsighted": InterventionKind.ON_P,
}


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldParams = WorldParams()
    base_user: UserParams = UserParams()
    gamma_app: float = DEFAULT_GAMMA_APP
    d_floor: Optional[float] = None
    epsilon_B: Optional[float] = None
    resolution: int = 1000
    presets: tuple = tuple(PRESETS)

    def user(self, preset: str) -> UserParams:
        try:
            return PRESETS[preset].params(self.base_user)
        except KeyError:
            raise ParameterError(f"unknown preset {preset!r}") from None

    def profile(self, theta: UserParams) -> InterventionProfile:
        return InterventionProfile.maximal(theta, self.d_floor, self.epsilon_B)


# -- window patterns ---------------------------------------------------------

_RANK = {
    WindowLabel.HOPELESS: 0,
    WindowLabel.WINDOW1: 1,
    WindowLabel.WINDOW2: 2,
    WindowLabel.WINDOW3: 3,
    WindowLabel.DEFAULT_ACT: 3,
}


@dataclass(frozen=True)
class PatternVerdict:
    status: str  # "pass", "fail" or "vacuous"
    expected: InterventionKind
    has_window1: bool
    has_window2: bool
    has_window3: bool
    problems: tuple = ()

    @property
    def full(self) -> bool:
        """Both windows present and in order."""
        return self.status == "pass" and self.has_window1 and self.has_window2


def pattern_verdict(decomposition: WindowDecomposition, expected: InterventionKind) -> PatternVerdict:
    runs = decomposition.runs
    labels = [r.label for r in runs]
    has = {lab: lab in labels for lab in WindowLabel}
    common = dict(
        expected=expected,
        has_window1=has[WindowLabel.WINDOW1],
        has_window2=has[WindowLabel.WINDOW2],
        has_window3=has[WindowLabel.WINDOW3],
    )
    if all(lab is WindowLabel.DEFAULT_ACT for lab in labels):
        return PatternVerdict("vacuous", **common)
    problems = []
    for r in runs:
        if r.label is WindowLabel.WINDOW2 and r.bounded != frozenset({expected}):
            wrong = ",".join(sorted(k.value for k in r.bounded))
            problems.append(f"w={r.first_w}..{r.last_w}: Window2 relies on {wrong}, expected {expected.value}")
    for a, b in zip(runs, runs[1:]):
        if _RANK[b.label] < _RANK[a.label]:
            problems.append(
                f"{b.label.value} at w={b.first_w} is closer to the goal than {a.label.value} at w={a.last_w}"
            )
    return PatternVerdict("fail" if problems else "pass", problems=tuple(problems), **common)


# -- figure pipelines --------------------------------------------------------


@dataclass
class PolicyMapResult:
    config: ExperimentConfig
    policies: dict
    windows: dict
    verdicts: dict  # preset -> PatternVerdict (impaired presets only)

    @property
    def failures(self) -> dict:
        return {k: v for k, v in self.verdicts.items() if v.status == "fail"}

    def rows(self) -> list[dict]:
        out = []
        N = self.config.world.n_states
        for preset, pol in self.policies.items():
            labels = {}
            for run in self.windows[preset].runs:
                for w in run.states:
                    labels[w] = run
            for sp in pol.states:
                run = labels[sp.w]
                out.append(
                    {
                        "preset": preset,
                        "state": str(sp.w),
                        "delta": N - sp.w,
                        "admissible": _kinds(sp.admissible),
                        "chosen": sp.chosen.value,
                        "default_act": int(sp.default_act),
                        "window": run.label.value,
                        "window_kind": _kinds(run.bounded),
                    }
                )
            for terminal in ("goal", "disengaged"):
                out.append(
                    {
                        "preset": preset,
                        "state": terminal,
                        "delta": 0 if terminal == "goal" else "",
                        "admissible": "",
                        "chosen": "",
                        "default_act": "",
                        "window": "",
                        "window_kind": "",
                    }
                )
        return out


def figure_checks(result: PolicyMapResult) -> list[str]:
    """Window claims for the main policy figure; returns the failed ones.

    Myopic and overconfident users need a B/D-only Window1 farther out than a
    gamma Window2; underconfident and farsighted users need a p Window2.
    Nothing can be done once disengaged.
    """
    failures = []
    for preset, expected in PATTERN_KIND.items():
        if preset not in result.windows:
            continue
        runs = result.windows[preset].runs
        w2 = [r for r in runs if r.label is WindowLabel.WINDOW2]
        w2_right = [r for r in w2 if r.bounded == frozenset({expected})]
        if not w2_right:
            failures.append(f"{preset}: no Window2 run on {expected.value}")
        for r in w2:
            if r.bounded != frozenset({expected}):
                failures.append(f"{preset}: Window2 at w={r.first_w}..{r.last_w} is not on {expected.value}")
        if expected is InterventionKind.ON_GAMMA:
            w1 = [r for r in runs if r.label is WindowLabel.WINDOW1 and r.signature <= BD_KINDS]
            if not w1:
                failures.append(f"{preset}: no Window1 (B/D only) run")
            elif w2_right and w1[0].first_w > w2_right[0].first_w:
                failures.append(f"{preset}: Window1 is not farther from the goal than Window2")
    for preset, pol in result.policies.items():
        if pol.admissible(DISENGAGED):
            failures.append(f"{preset}: disengaged state admits an intervention")
    return failures


def _kinds(kinds) -> str:
    order = {k: i for i, k in enumerate(InterventionKind)}
    return ";".join(k.value for k in sorted(kinds, key=order.__getitem__))


def reproduce_policy_maps(config: ExperimentConfig = ExperimentConfig()) -> PolicyMapResult:
    policies: dict[str, AppPolicy] = {}
    windows: dict[str, WindowDecomposition] = {}
    verdicts: dict[str, PatternVerdict] = {}
    for preset in config.presets:
        theta = config.user(preset)
        pol = plan(theta, config.world, config.profile(theta), config.gamma_app)
        policies[preset] = pol
        windows[preset] = extract_windows(pol)
        if preset in PATTERN_KIND:
            verdicts[preset] = pattern_verdict(windows[preset], PATTERN_KIND[preset])
    return PolicyMapResult(config, policies, windows, verdicts)


@dataclass
class EffectivenessCurves:
    config: ExperimentConfig
    # (preset, w) -> {kind: percent or None}
    values: dict

    def at(self, preset: str, w: int) -> dict:
        return self.values[(preset, w)]

    def rows(self) -> list[dict]:
        N = self.config.world.n_states
        out = []
        for (preset, w), per_kind in self.values.items():
            for kind in ACTIVE_KINDS:
                v = per_kind[kind]
                out.append(
                    {
                        "preset": preset,
                        "state": w,
                        "delta": N - w,
                        "kind": kind.value,
                        "min_effectiveness": "NA" if v is None else v,
                        "feasible": int(v is not None),
                    }
                )
        return out


def reproduce_effectiveness_curves(config: ExperimentConfig = ExperimentConfig()) -> EffectivenessCurves:
    values = {}
    world = config.world
    for preset in config.presets:
        theta = config.user(preset)
        profile = config.profile(theta)
        for w in range(1, world.n_states):
            delta = world.n_states - w
            values[(preset, w)] = {
                k: min_effectiveness(theta, world, delta, k, profile, config.resolution)
                for k in ACTIVE_KINDS
            }
    return EffectivenessCurves(config, values)


@dataclass(frozen=True)
class ComparisonReport:
    """Underconfident effectiveness at states beyond the goal's neighbour where p works."""

    far_states: tuple
    comparison_state: Optional[int]
    values: dict  # w -> {kind: percent or None}

    def comparison_values(self) -> dict:
        return self.values[self.comparison_state] if self.comparison_state else {}


def underconfident_comparison(
    curves: EffectivenessCurves, policy: AppPolicy, preset: str = "underconfident"
) -> ComparisonReport:
    """Select the far states where intervening on p is feasible.

    The comparison state is the farthest of them, where the p intervention
    needs the most effectiveness while still being able to work.
    """
    N = curves.config.world.n_states
    far = []
    for sp in policy.states:
        if N - sp.w < 2 or sp.default_act:
            continue
        if curves.at(preset, sp.w)[InterventionKind.ON_P] is not None:
            far.append(sp.w)
    comparison = min(far) if far else None
    return ComparisonReport(tuple(far), comparison, {w: curves.at(preset, w) for w in far})


# -- sensitivity -------------------------------------------------------------

SAMPLING_RANGES = {
    "gamma_user": (0.4, 0.7),
    "p_user": (0.5, 0.7),
    "burden": (-5.0, -0.1),
    "disengage_reward": (-5.0, 5.0),
    "d_world": (0.1, 0.5),
}


@dataclass
class TrialResult:
    index: int
    draw: dict  # sampled values keyed like SAMPLING_RANGES
    windows: dict
    verdicts: dict  # preset -> PatternVerdict

    @property
    def status(self) -> str:
        statuses = [v.status for v in self.verdicts.values()]
        if all(s == "vacuous" for s in statuses):
            return "vacuous"
        return "fail" if "fail" in statuses else "pass"

    @property
    def window3_seen(self) -> bool:
        return any(v.has_window3 for v in self.verdicts.values())


@dataclass
class SensitivityResult:
    seed: int
    trials: list = field(default_factory=list)

    def count(self, status: str) -> int:
        return sum(t.status == status for t in self.trials)


def sample_trial(rng: np.random.Generator) -> dict:
    """One uniform draw per sampled parameter, in SAMPLING_RANGES order."""
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in SAMPLING_RANGES.items()}


def evaluate_trial(draw: dict, config: ExperimentConfig = ExperimentConfig(), index: int = 0) -> TrialResult:
    base = replace(
        config.base_user,
        gamma_user=draw["gamma_user"],
        p_user=draw["p_user"],
        burden=draw["burden"],
        disengage_reward=draw["disengage_reward"],
    )
    world = replace(config.world, d_world=draw["d_world"])
    windows, verdicts = {}, {}
    for preset in IMPAIRED_PRESETS:
        theta = PRESETS[preset].params(base)
        profile = InterventionProfile.maximal(theta, config.d_floor, config.epsilon_B)
        windows[preset] = extract_windows(plan(theta, world, profile, config.gamma_app))
        verdicts[preset] = pattern_verdict(windows[preset], PATTERN_KIND[preset])
    return TrialResult(index, draw, windows, verdicts)


def _trial_job(args) -> TrialResult:
    index, child, config = args
    rng = np.random.Generator(np.random.Philox(child))
    return evaluate_trial(sample_trial(rng), config, index)


def run_sensitivity(
    n_trials: int,
    seed: int = 0,
    config: ExperimentConfig = ExperimentConfig(),
    workers: int = 1,
) -> SensitivityResult:
    """Sample parameter sets and check the window patterns for each.

    Trial ``i`` draws from the ``i``-th child of ``SeedSequence(seed)``, so
    results do not depend on ``workers`` or on completion order.
    """
    if n_trials < 1:
        raise ParameterError("n_trials must be at least 1")
    children = np.random.SeedSequence(seed).spawn(n_trials)
    jobs = [(i, child, config) for i, child in enumerate(children)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_trial_job, jobs))
    else:
        trials = [_trial_job(j) for j in jobs]
    return SensitivityResult(seed, trials)

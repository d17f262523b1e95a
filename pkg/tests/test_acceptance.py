"""Acceptance gate: full-scale convergence studies and scenario runs.

Everything here runs at shipping resolution, so the module takes tens of
minutes; the per-module suites cover the same code paths at toy sizes.
Select or skip it with `-m acceptance` / `-m "not acceptance"`.

The seven checks:
  1. first-order energy rate for both wave models (backward Euler, P1)
  2. second-order energy rate (BDF2, P2) and the P3 plateau behaviour
  3. L2 field rates of order degree + 1 before the time error floors them
  4. driven-run heating magnitude at full resolution, within budget
  5. the structural property tests (delegated to the module suites)
  6. mirror symmetry of the focused-pulse run at full resolution
  7. byte-identical study reports across repeated executions
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from thermofem.mesh import mirror_vertex_map
from thermofem.mms import ConvergenceConfig, convergence_study
from thermofem.scenarios import ScenarioConfig, run_scenario

pytestmark = pytest.mark.acceptance

REPO_ROOT = Path(__file__).resolve().parent.parent

# budget on the wall clock of one criterion-1 study (one variant)
FIRST_ORDER_BUDGET_S = 600.0
# budget on the full-resolution driven run
DRIVEN_RUN_BUDGET_S = 900.0


def timed_study(config):
    t0 = time.monotonic()
    result = convergence_study(config)
    return result, time.monotonic() - t0


@pytest.fixture(scope="module")
def euler_p1_westervelt():
    # the ConvergenceConfig defaults are exactly this study: quadratic
    # pressure model, backward Euler, P1, n in {8,...,64}, tau = 1/128, T = 1
    return timed_study(ConvergenceConfig())


@pytest.fixture(scope="module")
def euler_p1_kuznetsov():
    return timed_study(ConvergenceConfig(variant="kuznetsov"))


@pytest.fixture(scope="module")
def bdf2_p2():
    return timed_study(ConvergenceConfig(scheme="bdf2", degree=2))


@pytest.fixture(scope="module")
def bdf2_p3():
    # coarser meshes and a larger step: at P3 the spatial error drops so
    # fast that tau = 1/32 already exposes both the rate and its floor
    return timed_study(ConvergenceConfig(scheme="bdf2", degree=3,
                                         meshes=(4, 8, 16, 32), tau=1.0 / 32.0))


@pytest.fixture(scope="module")
def driven_run_full():
    t0 = time.monotonic()
    result = run_scenario(ScenarioConfig(example=3))
    return result, time.monotonic() - t0


@pytest.fixture(scope="module")
def pulse_run_100():
    return run_scenario(ScenarioConfig(example=2, final_time=1e-5, snapshots=(100,)))


class TestCriterion1FirstOrderEnergyRate:
    def _check(self, result, seconds):
        rate = result.rates_e_tau[-1]
        assert 0.8 <= rate <= 1.2, f"finest-pair energy rate {rate:.3f}"
        assert seconds <= FIRST_ORDER_BUDGET_S, f"study took {seconds:.0f} s"
        assert all(row.e_tau > 0 for row in result.rows)

    def test_westervelt(self, euler_p1_westervelt):
        self._check(*euler_p1_westervelt)

    def test_kuznetsov(self, euler_p1_kuznetsov):
        self._check(*euler_p1_kuznetsov)


class TestCriterion2SecondOrderEnergyRate:
    def test_bdf2_p2_finest_rate(self, bdf2_p2):
        result, _ = bdf2_p2
        rate = result.rates_e_tau[-1]
        assert 1.7 <= rate <= 2.3, f"finest-pair energy rate {rate:.3f}"

    def test_bdf2_p3_rate_then_plateau(self, bdf2_p3):
        result, _ = bdf2_p3
        rates = result.rates_e_tau
        idx = result.plateau_index()
        assert idx == len(rates) - 1, f"plateau at pair {idx}, rates {rates}"
        pre = result.pre_plateau_rates()
        assert len(pre) >= 1
        assert np.all(pre >= 2.5), f"pre-plateau rates {pre}"


class TestCriterion3FieldRates:
    def test_p1_l2_rate(self, euler_p1_westervelt):
        result, _ = euler_p1_westervelt
        pre = result.pre_plateau_rates(which="l2")
        assert len(pre) >= 1
        assert np.all((pre >= 1.7) & (pre <= 2.3)), f"L2 rates {pre}"

    def test_p2_l2_rate(self, bdf2_p2):
        result, _ = bdf2_p2
        pre = result.pre_plateau_rates(which="l2")
        assert len(pre) >= 1
        assert np.all((pre >= 2.7) & (pre <= 3.3)), f"L2 rates {pre}"


class TestCriterion4DrivenHeating:
    def test_magnitude_and_budget(self, driven_run_full):
        result, seconds = driven_run_full
        s = result.summary
        assert s["n_steps"] == 400
        assert s["n_triangles"] >= 38912  # at least the reference resolution
        assert 1e-10 <= s["max_abs_theta"] <= 1e-8, s["max_abs_theta"]
        assert seconds <= DRIVEN_RUN_BUDGET_S, f"run took {seconds:.0f} s"


class TestCriterion5PropertySuite:
    # each structural property lives next to the module it checks; this
    # re-runs exactly those tests so the gate fails if any are renamed away
    NODES = [
        "tests/test_fem.py::TestMass",
        "tests/test_fem.py::TestStiffness",
        "tests/test_fem.py::TestRitz",
        "tests/test_fem.py::TestWeightedStiffness::test_refined_quadrature_oracle",
        "tests/test_stepping.py::TestDifferenceExactness",
        "tests/test_stepping.py::TestWaveStep::test_linear_regime_single_iteration",
        "tests/test_stepping.py::TestEnergyDecay",
        "tests/test_stepping.py::TestHeatStep::test_l2_contraction_over_random_states",
        "tests/test_stepping.py::TestRunSimulation::test_zero_data_stays_zero",
        "tests/test_mms.py::TestSourceOracles",
    ]

    def test_properties_pass(self):
        proc = subprocess.run(
            [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *self.NODES],
            cwd=REPO_ROOT, capture_output=True, text=True, timeout=900)
        assert proc.returncode == 0, f"\n{proc.stdout}\n{proc.stderr}"


class TestCriterion6MirrorSymmetry:
    def test_pulse_run_step_100(self, pulse_run_100):
        state = pulse_run_100.simulation.state
        assert state.step == 100
        mirror = mirror_vertex_map(state.space.mesh)
        u = state.u[0]
        discrepancy = np.max(np.abs(u - u[mirror])) / np.max(np.abs(u))
        assert discrepancy <= 1e-8, f"relative mirror discrepancy {discrepancy:.3e}"


class TestCriterion7Determinism:
    def test_repeated_study_byte_identical(self, euler_p1_westervelt, tmp_path):
        first, _ = euler_p1_westervelt
        first.to_csv(tmp_path / "first.csv")
        rerun = convergence_study(ConvergenceConfig())
        rerun.to_csv(tmp_path / "second.csv")
        assert (tmp_path / "first.csv").read_bytes() == (tmp_path / "second.csv").read_bytes()

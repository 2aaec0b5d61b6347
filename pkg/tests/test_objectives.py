import numpy as np
import pytest

from icsel.objectives import (
    ObjectiveError,
    ObjectiveSpec,
    SelectionState,
    marginal_gain,
    objective_value,
    objective_value_at,
    reduce_to_fl,
)
from tests.conftest import make_kernel


@pytest.fixture
def kt_kernel():
    return make_kernel([[0.0, 0.8, 0.0], [0.0, 0.7, 0.2]], row_prefix="t")


@pytest.fixture
def ke_kernel():
    return make_kernel([[0.95], [0.9], [0.0]], col_prefix="e")


def random_spec(rng, kind, n=None):
    n = n or rng.randint(2, 10)
    dd = make_kernel(rng.rand(n, n))
    td = de = None
    if kind == "flmi":
        td = make_kernel(rng.rand(rng.randint(1, 5), n), row_prefix="t")
    if kind == "flcg":
        de = make_kernel(rng.rand(n, rng.randint(1, 5)), col_prefix="e")
    return ObjectiveSpec(kind, dd, kernel_td=td, kernel_de=de,
                         eta=float(rng.rand() * 2), nu=float(rng.rand() * 2))


class TestObjectiveValue:
    def test_fl_pins(self, k1_kernel):
        spec = ObjectiveSpec("fl", k1_kernel)
        assert objective_value(spec, {"col2"}) == pytest.approx(1.2, abs=1e-6)
        assert objective_value(spec, {"col0", "col2"}) == pytest.approx(2.9, abs=1e-6)

    def test_flmi_pin_with_default_eta(self, k1_kernel, kt_kernel):
        spec = ObjectiveSpec("flmi", k1_kernel, kernel_td=kt_kernel)
        assert spec.eta == 1.0
        assert objective_value(spec, {"col1"}) == pytest.approx(2.8, abs=1e-6)

    def test_flcg_pins_with_default_nu(self, k1_kernel, ke_kernel):
        spec = ObjectiveSpec("flcg", k1_kernel, kernel_de=ke_kernel)
        assert spec.nu == 1.0
        assert objective_value(spec, {"col0"}) == pytest.approx(0.15, abs=1e-6)
        assert objective_value(spec, {"col2"}) == pytest.approx(1.0, abs=1e-6)

    def test_empty_set_is_zero(self, k1_kernel, kt_kernel, ke_kernel):
        for spec in (
            ObjectiveSpec("fl", k1_kernel),
            ObjectiveSpec("flmi", k1_kernel, kernel_td=kt_kernel),
            ObjectiveSpec("flcg", k1_kernel, kernel_de=ke_kernel),
        ):
            assert objective_value(spec, set()) == 0.0

    def test_unknown_id_rejected(self, k1_kernel):
        with pytest.raises(ObjectiveError, match="nope"):
            objective_value(ObjectiveSpec("fl", k1_kernel), {"nope"})


class TestSpecValidation:
    def test_requires_kernels_per_kind(self, k1_kernel):
        with pytest.raises(ObjectiveError):
            ObjectiveSpec("flmi", k1_kernel)
        with pytest.raises(ObjectiveError):
            ObjectiveSpec("flcg", k1_kernel)
        with pytest.raises(ObjectiveError):
            ObjectiveSpec("nope", k1_kernel)

    def test_rejects_negative_kernel(self):
        with pytest.raises(ObjectiveError, match="clamp"):
            ObjectiveSpec("fl", make_kernel([[-0.1]]))

    def test_rejects_negative_weights(self, k1_kernel):
        with pytest.raises(ObjectiveError):
            ObjectiveSpec("fl", k1_kernel, eta=-1)

    def test_cross_kernel_shape_checked(self, k1_kernel):
        bad_td = make_kernel([[0.1, 0.2]], row_prefix="t")
        with pytest.raises(ObjectiveError, match="columns"):
            ObjectiveSpec("flmi", k1_kernel, kernel_td=bad_td)


class TestReduceToFl:
    def test_fl_is_identity(self, k1_kernel):
        kernel, bonus = reduce_to_fl(ObjectiveSpec("fl", k1_kernel))
        np.testing.assert_array_equal(kernel, k1_kernel.values.astype(np.float64))
        assert (bonus == 0).all()

    def test_flmi_bonus_is_columnwise_max(self, k1_kernel, kt_kernel):
        _, bonus = reduce_to_fl(ObjectiveSpec("flmi", k1_kernel, kernel_td=kt_kernel))
        np.testing.assert_allclose(bonus, [0.0, 0.8, 0.2], atol=1e-6)

    def test_flcg_empty_existing_equals_fl(self, k1_kernel):
        empty = make_kernel(np.zeros((3, 0)), col_prefix="e")
        spec = ObjectiveSpec("flcg", k1_kernel, kernel_de=empty)
        kernel, bonus = reduce_to_fl(spec)
        np.testing.assert_array_equal(kernel, k1_kernel.values.astype(np.float64))
        assert (bonus == 0).all()
        for a in ([], [0], [0, 2]):
            assert objective_value_at(spec, a) == pytest.approx(
                objective_value_at(ObjectiveSpec("fl", k1_kernel), a)
            )

    def test_flcg_zero_nu_equals_fl(self, k1_kernel, ke_kernel):
        spec = ObjectiveSpec("flcg", k1_kernel, kernel_de=ke_kernel, nu=0.0)
        kernel, _ = reduce_to_fl(spec)
        np.testing.assert_array_equal(kernel, k1_kernel.values.astype(np.float64))

    @pytest.mark.parametrize("kind", ["fl", "flmi", "flcg"])
    def test_reduction_matches_direct_formula(self, kind):
        rng = np.random.RandomState(7)
        for _ in range(300):
            spec = random_spec(rng, kind)
            n = spec.n_candidates
            kernel, bonus = reduce_to_fl(spec)
            a = list(rng.choice(n, size=rng.randint(0, n + 1), replace=False))
            direct = objective_value_at(spec, a)
            reduced = (
                (kernel[:, a].max(axis=1).sum() if a else 0.0)
                + bonus[a].sum()
            )
            assert reduced == pytest.approx(direct, rel=1e-9, abs=1e-12)


class TestMarginalGain:
    def test_fl_pin(self, k1_kernel):
        spec = ObjectiveSpec("fl", k1_kernel)
        state = SelectionState.initial(spec)
        state.add(0)
        assert marginal_gain(spec, state, "col2") == pytest.approx(0.9, abs=1e-6)

    def test_empty_state_gain_is_column_contribution(self, k1_kernel):
        spec = ObjectiveSpec("fl", k1_kernel)
        state = SelectionState.initial(spec)
        assert marginal_gain(spec, state, "col0") == pytest.approx(2.0, abs=1e-6)

    def test_duplicate_column_gains_only_bonus(self, kt_kernel):
        dd = make_kernel([[0.5, 0.5], [0.2, 0.2]])
        td = make_kernel([[0.3, 0.4]], row_prefix="t")
        spec = ObjectiveSpec("flmi", dd, kernel_td=td)
        state = SelectionState.initial(spec)
        state.add(0)
        # col1 is identical to the chosen col0, so only the modular bonus remains
        assert marginal_gain(spec, state, "col1") == pytest.approx(0.4, abs=1e-6)
        fl_spec = ObjectiveSpec("fl", dd)
        fl_state = SelectionState.initial(fl_spec)
        fl_state.add(0)
        assert marginal_gain(fl_spec, fl_state, "col1") == 0.0

    def test_already_chosen_rejected(self, k1_kernel):
        spec = ObjectiveSpec("fl", k1_kernel)
        state = SelectionState.initial(spec)
        state.add(1)
        with pytest.raises(ObjectiveError, match="already chosen"):
            marginal_gain(spec, state, "col1")

    @pytest.mark.parametrize("kind", ["fl", "flmi", "flcg"])
    def test_matches_value_difference(self, kind):
        rng = np.random.RandomState(11)
        for _ in range(100):
            spec = random_spec(rng, kind)
            n = spec.n_candidates
            state = SelectionState.initial(spec)
            chosen = list(rng.choice(n, size=rng.randint(0, n - 1), replace=False))
            for j in chosen:
                state.add(int(j))
            rest = [j for j in range(n) if j not in chosen]
            d = int(rng.choice(rest))
            incremental = state.gain_at(d)
            from_scratch = (
                objective_value_at(spec, chosen + [d])
                - objective_value_at(spec, chosen)
            )
            assert incremental == pytest.approx(from_scratch, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("kind", ["fl", "flmi", "flcg"])
class TestSubmodularityProperties:
    def test_monotone_and_diminishing(self, kind):
        rng = np.random.RandomState(13)
        for _ in range(200):
            spec = random_spec(rng, kind)
            n = spec.n_candidates
            if n < 3:
                continue
            size_a = rng.randint(0, n - 2)
            a = sorted(rng.choice(n, size=size_a, replace=False))
            extra_pool = [j for j in range(n) if j not in a]
            extra = sorted(
                rng.choice(extra_pool, size=rng.randint(1, len(extra_pool)),
                           replace=False)
            )
            b = sorted(set(a) | set(extra))
            outside = [j for j in range(n) if j not in b]
            if not outside:
                continue
            d = int(outside[0])
            fa, fb = objective_value_at(spec, a), objective_value_at(spec, b)
            assert fa <= fb + 1e-12  # monotone
            gain_a = objective_value_at(spec, a + [d]) - fa
            gain_b = objective_value_at(spec, b + [d]) - fb
            assert gain_a >= gain_b - 1e-12  # diminishing returns

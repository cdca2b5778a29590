import numpy as np
import pytest

from dimer import (
    ClosureViolation,
    DimerParams,
    WrongChannel,
    collective_relaxation_block,
    collective_relaxation_eigs,
    dephasing_basis,
    dephasing_eigs,
    dephasing_seam_in_range,
    dimer_model,
    ep_condition_dephasing,
    ep_condition_dephasing_alt,
    ep_condition_relaxation,
    ep_condition_relaxation_imbalance,
    full_dimer_liouvillian,
    project_adjoint,
    reduced_dephasing,
    reduced_relaxation,
    relaxation_eigs,
    validate_reduction,
)
from lindblad import JumpFamily, LindbladModel, adjoint_liouvillian, hopping_hamiltonian
from noisegraph import CorrelationModel, build_dimer
from opspace import QOperator


def dephasing(c, j, gamma=1.0):
    return DimerParams(gamma=gamma, c=c, j=j, channel="dephasing")


def relaxation(c, delta, gamma=1.0):
    return DimerParams(gamma=gamma, c=c, delta=delta, channel="relaxation")


def nearest_distance(values, target):
    return float(np.min(np.abs(np.asarray(values) - target)))


class TestDimerParams:
    def test_channel_from_string(self):
        assert dephasing(0.1, 0.2).channel.value == "dephasing"

    def test_custom_channel_rejected(self):
        with pytest.raises(WrongChannel):
            DimerParams(gamma=1.0, c=0.0, channel="custom")

    def test_gamma_positive(self):
        with pytest.raises(ValueError):
            dephasing(0.0, 0.5, gamma=-1.0)

    def test_correlation_bounded(self):
        with pytest.raises(ValueError):
            dephasing(1.2, 0.5)


class TestReducedGenerators:
    def test_dephasing_matrix(self):
        np.testing.assert_array_equal(reduced_dephasing(dephasing(0.0, 0.5)).matrix, [[-2, -1], [1, 0]])

    def test_relaxation_matrix(self):
        np.testing.assert_allclose(reduced_relaxation(relaxation(0.0, 0.3)).matrix, [[0, -0.3], [0.3, -1]])

    def test_wrong_channel(self):
        with pytest.raises(WrongChannel):
            reduced_relaxation(dephasing(0.1, 0.2))
        with pytest.raises(WrongChannel):
            dephasing_eigs(relaxation(0.1, 0.2))

    def test_dephasing_eigs_weak_tunneling(self):
        eigs = sorted(dephasing_eigs(dephasing(0.0, 0.1)), key=lambda z: z.real)
        np.testing.assert_allclose([z.real for z in eigs], [-1.9798, -0.0202], atol=1e-4)

    def test_relaxation_eigs(self):
        eigs = sorted(relaxation_eigs(relaxation(0.0, 0.3)), key=lambda z: z.real)
        np.testing.assert_allclose(eigs, [-0.9, -0.1], atol=1e-12)

    @pytest.mark.parametrize("c, j", [(0.0, 0.1), (0.3, 0.5), (-0.7, 1.2), (0.9, 0.02)])
    def test_closed_form_matches_matrix(self, c, j):
        p = dephasing(c, j)
        closed = np.sort_complex(np.array(dephasing_eigs(p)))
        numeric = np.sort_complex(reduced_dephasing(p).eigvals())
        np.testing.assert_allclose(closed, numeric, atol=1e-10)

    @pytest.mark.parametrize("c, delta", [(0.0, 0.3), (0.4, 0.05), (-0.5, 0.8)])
    def test_relaxation_closed_form_matches_matrix(self, c, delta):
        p = relaxation(c, delta)
        np.testing.assert_allclose(np.sort_complex(np.array(relaxation_eigs(p))),
                                   np.sort_complex(reduced_relaxation(p).eigvals()), atol=1e-10)
        np.testing.assert_allclose(np.sort_complex(np.array(collective_relaxation_eigs(p))),
                                   np.sort_complex(collective_relaxation_block(p).eigvals()), atol=1e-10)

    def test_branches_merge_at_dephasing_seam(self):
        c_crit = ep_condition_dephasing(1.0, 0.3)
        plus, minus = dephasing_eigs(dephasing(c_crit, 0.3))
        assert abs(plus - minus) < 1e-6

    def test_branches_merge_at_collective_relaxation_seam(self):
        for c in (0.5, -0.5):
            plus, minus = collective_relaxation_eigs(relaxation(c, 0.25))
            assert plus == pytest.approx(-1.5)
            assert minus == pytest.approx(-1.5)


class TestEpConditions:
    def test_relaxation(self):
        assert ep_condition_relaxation(2.0, -1.0) == pytest.approx(3.0)
        assert ep_condition_relaxation_imbalance(1.0, -0.5) == pytest.approx(0.25)

    def test_dephasing_out_of_range(self):
        assert ep_condition_dephasing(1.0, 1.5) == pytest.approx(-2.0)
        assert not dephasing_seam_in_range(1.0, 1.5)

    def test_dephasing_in_range(self):
        assert ep_condition_dephasing(1.0, 0.25) == pytest.approx(0.5)
        assert ep_condition_dephasing_alt(1.0, 0.25) == pytest.approx(0.75)
        assert dephasing_seam_in_range(1.0, 0.25)

    def test_gamma_positive(self):
        for fn in (ep_condition_relaxation, ep_condition_relaxation_imbalance,
                   ep_condition_dephasing, ep_condition_dephasing_alt):
            with pytest.raises(ValueError):
                fn(0.0, 0.5)


class TestLift:
    def test_dephasing_uses_half_rate(self):
        model = dimer_model(dephasing(0.2, 0.4, gamma=2.0))
        assert model.correlation.gamma0 == pytest.approx(1.0)
        assert model.d == 4

    def test_relaxation_uses_full_rate(self):
        assert dimer_model(relaxation(0.2, 0.4, gamma=2.0)).correlation.gamma0 == pytest.approx(2.0)

    @pytest.mark.parametrize("c, j", [(0.0, 0.1), (0.3, 0.2), (-0.6, 0.7), (0.8, 0.05)])
    def test_dephasing_spectrum_embeds(self, c, j):
        p = dephasing(c, j)
        full = np.linalg.eigvals(full_dimer_liouvillian(p))
        for lam in dephasing_eigs(p):
            assert nearest_distance(full, lam) < 1e-8

    @pytest.mark.parametrize("c, delta", [(0.0, 0.3), (0.3, 0.2), (-0.8, 0.1)])
    def test_collective_relaxation_spectrum_embeds(self, c, delta):
        p = relaxation(c, delta)
        full = np.linalg.eigvals(full_dimer_liouvillian(p))
        for lam in collective_relaxation_eigs(p):
            assert nearest_distance(full, lam) < 1e-8


class TestValidateReduction:
    def test_relaxation(self):
        report = validate_reduction(relaxation(0.3, 0.2))
        assert report.max_deviation < 1e-10
        assert report.leakage < 1e-10
        assert report.yz_leakage is not None

    def test_dephasing(self):
        report = validate_reduction(dephasing(0.5, 0.3))
        assert report.max_deviation < 1e-10
        assert report.yz_leakage is None
        payload = report.to_dict()
        assert payload["channel"] == "dephasing"
        assert np.allclose(payload["projected_imag"], 0.0)

    def test_wrong_tunneling_is_detected(self):
        p = dephasing(0.2, 0.3)
        graph = build_dimer()
        wrong = LindbladModel(QOperator(hopping_hamiltonian(graph, 0.6)), JumpFamily.dephasing(2),
                              CorrelationModel(gamma0=0.5, c=0.2, graph=graph))
        assert validate_reduction(p, model=wrong).max_deviation > 0.5

    def test_leaking_pair_raises(self):
        p = DimerParams(gamma=1.0, c=0.2, j=0.3, delta=0.3, channel="dephasing")
        with pytest.raises(ClosureViolation):
            validate_reduction(p, model=dimer_model(relaxation(0.2, 0.3)))

    def test_project_adjoint_identity_pair(self):
        adjoint = adjoint_liouvillian(dimer_model(dephasing(0.1, 0.4)))
        projected, leakage = project_adjoint(adjoint, dephasing_basis())
        assert leakage < 1e-12
        np.testing.assert_allclose(projected, reduced_dephasing(dephasing(0.1, 0.4)).matrix, atol=1e-12)

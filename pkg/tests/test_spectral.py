import numpy as np
import pytest

from openanneal.spectral import (BathSpec, build_lindblads, decompose,
                                 group_bohr, lamb_shift, ohmic_rate)

from conftest import SX, SZ, op_on, random_hermitian


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def test_decompose_diagonal():
    f = decompose(np.diag([-1.0, 1.0]))
    assert np.allclose(f.energies, [-1.0, 1.0])
    assert np.allclose(np.abs(f.vectors), np.eye(2))


def test_decompose_sigma_x():
    f = decompose(SX)
    assert np.allclose(f.energies, [-1.0, 1.0])
    minus = (np.array([1.0, -1.0]) / np.sqrt(2)).astype(complex)
    overlap = abs(np.vdot(minus, f.vectors[:, 0]))
    assert np.isclose(overlap, 1.0, atol=1e-12)


def test_decompose_residual_oracle(rng):
    h = random_hermitian(8, rng)
    f = decompose(h)
    resid = h @ f.vectors - f.vectors * f.energies
    assert np.abs(resid).max() < 1e-10
    ortho = f.vectors.conj().T @ f.vectors - np.eye(8)
    assert np.abs(ortho).max() < 1e-10


def test_decompose_rejects_non_hermitian(rng):
    with pytest.raises(ValueError):
        decompose(rng.normal(size=(3, 3)) + 1j * np.ones((3, 3)))


def test_decompose_phase_continuity(rng):
    h0 = random_hermitian(6, rng)
    dh = random_hermitian(6, rng, scale=1e-3)
    prev = decompose(h0)
    for step in range(1, 6):
        cur = decompose(h0 + step * dh, prev)
        for a in range(6):
            o = np.vdot(prev.vectors[:, a], cur.vectors[:, a])
            assert o.real > 0.99
            assert abs(o.imag) < 1e-6
        prev = cur


def test_decompose_degenerate_cluster_rotation(rng):
    # a degenerate pair must be rotated onto the previous frame's pair
    h = np.diag([0.0, 1.0, 1.0, 3.0])
    prev = decompose(h)
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    scrambled = prev.vectors.copy()
    scrambled[:, 1:3] = scrambled[:, 1:3] @ q
    frame2 = decompose(h, prev)
    ov = np.abs(frame2.vectors.conj().T @ prev.vectors)
    assert np.allclose(np.diag(ov), 1.0, atol=1e-10)


# ---------------------------------------------------------------------------
# group_bohr
# ---------------------------------------------------------------------------

def test_group_bohr_two_level():
    f = decompose(np.diag([0.0, 2.5]))
    groups = group_bohr(f, 1e-4)
    omegas = sorted(g.omega for g in groups)
    assert np.allclose(omegas, [-2.5, 0.0, 2.5])


def test_group_bohr_merges_close_gaps():
    f = decompose(np.diag([0.0, 1.0, 1.0 + 1e-4]))
    groups = group_bohr(f, 1e-2)
    pos = [g for g in groups if g.omega > 0.5]
    assert len(pos) == 1
    assert pos[0].size == 2  # transitions 1->0 and 2->0 merged


def test_group_bohr_degenerate_pair_in_zero_group():
    f = decompose(np.diag([0.0, 1.0, 1.0]))
    groups = group_bohr(f, 1e-6)
    zero = [g for g in groups if g.omega == 0.0][0]
    # three diagonal pairs plus the two mutual transitions of the degenerate pair
    assert zero.size == 5


def test_group_bohr_partition_property(rng):
    f = decompose(random_hermitian(7, rng))
    groups = group_bohr(f, 1e-4)
    seen = set()
    for g in groups:
        for a, b in zip(g.rows, g.cols):
            assert (a, b) not in seen
            seen.add((int(a), int(b)))
            gap = f.energies[b] - f.energies[a]
            assert abs(gap - g.omega) <= 1e-4 + 1e-12
    assert len(seen) == 49
    assert any(g.omega == 0.0 for g in groups)


# ---------------------------------------------------------------------------
# ohmic_rate
# ---------------------------------------------------------------------------

def test_ohmic_rate_zero_frequency_limit(bath):
    want = 2.0 * np.pi * bath.eta_g2 / bath.beta
    assert np.isclose(ohmic_rate(0.0, bath), want, rtol=1e-12)
    assert np.isclose(ohmic_rate(1e-13, bath), want, rtol=1e-6)


def test_ohmic_rate_kms_single_point(bath):
    w = 1.0
    lhs = ohmic_rate(-w, bath)
    rhs = np.exp(-bath.beta * w) * ohmic_rate(w, bath)
    assert abs(lhs - rhs) < 1e-12


def test_ohmic_rate_kms_grid(bath):
    w = np.linspace(-1e3, 1e3, 4001)
    w = w[np.abs(w) > 1e-9]
    dev = np.abs(ohmic_rate(-w, bath) - np.exp(-bath.beta * w) * ohmic_rate(w, bath))
    assert np.nanmax(dev) < 1e-12


def test_ohmic_rate_low_temperature_cutoff_value():
    bath = BathSpec(eta_g2=1e-3, omega_c=10.0, temperature=1e-4)
    got = ohmic_rate(10.0, bath)
    want = 2.0 * np.pi * 1e-3 * 10.0 * np.exp(-1.0)
    assert np.isclose(got, want, rtol=1e-10)


# ---------------------------------------------------------------------------
# build_lindblads
# ---------------------------------------------------------------------------

def test_lindblads_pure_dephasing_single_qubit(bath):
    f = decompose(0.5 * 2.0 * SZ.astype(complex))
    lset = build_lindblads(f, bath, coupling_ops=[SZ])
    assert len(lset) == 1
    op = lset.ops[0]
    assert op.omega == 0.0
    bare = op.matrix / np.sqrt(op.rate)
    assert np.allclose(np.abs(bare), np.eye(2), atol=1e-12)


def test_lindblads_collective_equals_summed_independent(rng, bath):
    # on any Hamiltonian the collective channel operator is the sum of the
    # per-qubit ones at each Bohr frequency
    n = 2
    h = random_hermitian(4, rng)
    f = decompose(h)
    ops = [op_on(SZ, i, n) for i in range(n)]
    ind = build_lindblads(f, bath, coupling_ops=ops, absorb_rates=False)
    col_bath = BathSpec(eta_g2=bath.eta_g2, omega_c=bath.omega_c,
                        temperature=bath.temperature, topology="collective")
    col = build_lindblads(f, col_bath, coupling_ops=ops, absorb_rates=False)
    for cop in col:
        total = np.zeros_like(cop.matrix)
        for iop in ind:
            if abs(iop.omega - cop.omega) < 1e-9:
                total += iop.matrix
        assert np.allclose(cop.matrix, total, atol=1e-12)


def test_lindblads_completeness_count(rng, bath):
    # nonzero matrix elements across all groups equal those of the raw operator
    h = random_hermitian(6, rng)
    f = decompose(h)
    a_op = random_hermitian(6, rng)
    lset = build_lindblads(f, bath, coupling_ops=[a_op], absorb_rates=False)
    m = f.vectors.conj().T @ a_op @ f.vectors
    n_raw = int(np.sum(np.abs(m) > 1e-12))
    n_set = sum(int(np.sum(np.abs(op.matrix) > 1e-12)) for op in lset)
    assert n_set == n_raw


def test_lindblads_chain_first_excited_jump_rate(bath, chain3):
    # lambda_{1->0} = sum_alpha gamma_alpha(omega_10) |<psi0|sz_alpha|psi1>|^2
    t = 9.0
    h = chain3.hamiltonian(t)
    f = decompose(h)
    lset = build_lindblads(f, bath, coupling_ops=chain3.coupling_ops)
    psi1 = np.zeros(8)
    psi1[1] = 1.0
    lam = 0.0
    for op in lset:
        vec = op.matrix @ psi1
        vec[1] = 0.0  # transitions out of level 1 to other levels
        lam += abs(vec[0]) ** 2
    omega10 = f.energies[1] - f.energies[0]
    want = 0.0
    for a_op in chain3.coupling_ops:
        m = f.vectors.conj().T @ a_op @ f.vectors
        want += ohmic_rate(omega10, bath) * abs(m[0, 1]) ** 2
    assert np.isclose(lam, want, rtol=1e-10)


# ---------------------------------------------------------------------------
# lamb_shift
# ---------------------------------------------------------------------------

def test_lamb_shift_disabled_is_zero(bath, chain2):
    f = decompose(chain2.hamiltonian(5.0))
    lset = build_lindblads(f, bath, coupling_ops=chain2.coupling_ops)
    assert np.allclose(lamb_shift(lset, bath, enabled=False), 0.0)


def test_lamb_shift_unit_kernel_gives_l_dag_l(bath):
    f = decompose(np.diag([0.0, 3.0]))
    lset = build_lindblads(f, bath, coupling_ops=[SX], absorb_rates=False)
    h_ls = lamb_shift(lset, bath, kernel=lambda w: 1.0)
    want = sum(op.matrix.conj().T @ op.matrix for op in lset)
    assert np.allclose(h_ls, want, atol=1e-12)


def test_lamb_shift_hermitian_and_commutes(bath, chain2):
    f = decompose(chain2.hamiltonian(8.0))
    lset = build_lindblads(f, bath, coupling_ops=chain2.coupling_ops)
    h_ls = lamb_shift(lset, bath, enabled=True)
    assert np.abs(h_ls - h_ls.conj().T).max() < 1e-10
    h_diag = np.diag(f.energies)
    comm = h_ls @ h_diag - h_diag @ h_ls
    assert np.abs(comm).max() < 1e-8  # block-diagonal in the eigenbasis

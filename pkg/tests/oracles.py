"""Brute-force dense-matrix oracles for small circuits (qubit 0 = MSB)."""
import numpy as np

from qplr import statevec as sv
from qplr.vqc import Encoding, Rotation

I2 = np.eye(2)


def embed(matrix, qubit, n):
    out = np.array([[1.0]])
    for q in range(n):
        out = np.kron(out, matrix if q == qubit else I2)
    return out


def cz_matrix(i, j, n):
    diag = np.ones(1 << n)
    for idx in range(1 << n):
        if (idx >> (n - 1 - i)) & 1 and (idx >> (n - 1 - j)) & 1:
            diag[idx] = -1.0
    return np.diag(diag)


def circuit_probs(spec, angles=None, amplitudes=None):
    """Outcome distribution of ``spec`` built from full 2^n x 2^n matrices."""
    n = spec.num_qubits
    if spec.encoding is Encoding.AMPLITUDE:
        psi = np.asarray(amplitudes, dtype=np.complex128)
    else:
        psi = np.zeros(1 << n, dtype=np.complex128)
        psi[0] = 1.0
        for q in range(n):
            psi = embed(sv.ry_matrix(angles[q]), q, n) @ psi
    for layer in range(spec.num_layers):
        for q in range(n):
            if spec.rotation is Rotation.ROT:
                m = sv.rot_matrix(*spec.theta[layer, q])
            else:
                m = sv.ry_matrix(spec.theta[layer, q])
            psi = embed(m, q, n) @ psi
        for i, j in spec.edges():
            psi = cz_matrix(i, j, n) @ psi
    return np.abs(psi) ** 2

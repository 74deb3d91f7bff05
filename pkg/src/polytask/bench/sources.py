"""Sequential DSL sources of the bundled applications."""
from __future__ import annotations

EP = """\
# Embarrassingly parallel: every cell is computed independently.
param n_size;
array a[n_size][n_size];
array b[n_size][n_size];
array c[n_size][n_size];
for i in 0..n_size {
    for j in 0..n_size {
        compute(c[i][j], a[i][j], b[i][j]);
    }
}
"""

CHOLESKY = """\
# Right-looking blocked Cholesky. A is overwritten by its factor L.
param m, b;
array A[m][m] block b;
for i in 0..m {
    for j in 0..i + 1 {
        fill_spd(A[i][j], 42, 0, i, j, m);
    }
}
for i in 0..m {
    for j in i + 1..m {
        zero(A[i][j]);
    }
}
for k in 0..m {
    potrf(A[k][k]);
    for i in k + 1..m {
        solve_triangular(A[k][k], A[i][k]);
    }
    for i in k + 1..m {
        for j in k + 1..i + 1 {
            gemm(A[i][k], A[j][k], A[i][j]);
        }
    }
}
"""

LU = """\
# Blocked LU without pivoting on a diagonally dominant matrix.
param m, b;
array A[m][m] block b;
for i in 0..m {
    for j in 0..m {
        fill_diagdom(A[i][j], 42, 0, i, j, m);
    }
}
for k in 0..m {
    custom_lu(A[k][k]);
    for j in k + 1..m {
        trsm_lower(A[k][k], A[k][j]);
    }
    for i in k + 1..m {
        trsm_upper(A[k][k], A[i][k]);
        for j in k + 1..m {
            dgemm(A[i][k], A[k][j], A[i][j]);
        }
    }
}
"""

QR = """\
# Blocked QR: each diagonal block annihilates the blocks below it pairwise.
param m, b;
array A[m][m] block b;
array Qd[m] block b;
array Q2[m][m] block 2 * b;
for i in 0..m {
    for j in 0..m {
        fill_random(A[i][j], 42, 0, i, j, m);
    }
}
for k in 0..m {
    qr(A[k][k], Qd[k]);
    for j in k + 1..m {
        apply_q(Qd[k], A[k][j]);
    }
    for i in k + 1..m {
        little_qr(A[k][k], A[i][k], Q2[i][k]);
        for j in k + 1..m {
            apply_pair(Q2[i][k], A[k][j], A[i][j]);
        }
    }
}
"""

_GEMM_DECLS = """\
# Element-wise GEMM: C = alpha * A * B + beta * C.
param n;
array A[n][n];
array B[n][n];
array C[n][n];
"""

_GEMM_INIT = """\
for i in 0..n {{
    for j in 0..n {{
        fill_random(A[i][j], 42, 0, i, j, n);
        {b_init}
        fill_random(C[i][j], 42, 2, i, j, n);
    }}
}}
"""

_GEMM_BODY = """\
for i in 0..n {{
    for j in 0..n {{
        scale(C[i][j], {beta!r});
    }}
}}
for i in 0..n {{
    for j in 0..n {{
        for k in 0..n {{
            multiply(C[i][j], A[i][k], B[k][j], {alpha!r});
        }}
    }}
}}
"""

GEMM_ALPHA = 1.5
GEMM_BETA = 0.5


def gemm_source(alpha: float = GEMM_ALPHA, beta: float = GEMM_BETA, init: bool = True,
                identity_b: bool = False) -> str:
    text = _GEMM_DECLS
    if init:
        b_init = ("fill_identity(B[i][j], i, j);" if identity_b
                  else "fill_random(B[i][j], 42, 1, i, j, n);")
        text += _GEMM_INIT.format(b_init=b_init)
    return text + _GEMM_BODY.format(alpha=float(alpha), beta=float(beta))


GEMM = gemm_source()

SOURCES = {"ep": EP, "cholesky": CHOLESKY, "lu": LU, "qr": QR, "gemm": GEMM}

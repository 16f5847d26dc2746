//! Basis bookkeeping and "monomial" operators.
//!
//! Every operator the model needs (ladder operators, σ±, σᶻ and products of
//! them) maps each basis state to at most one basis state. Storing them as a
//! target index plus a real coefficient per column keeps superoperator
//! assembly and matrix-free application cheap.

use faer::c64;

const NONE: u32 = u32::MAX;

/// Atoms ⊗ cavity Fock space ⊗ optional filter Fock space.
///
/// Basis index `((bits · (n_max+1)) + n) · (m_max+1) + m`; bit i of `bits`
/// set means atom i is excited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleSpace {
    pub n_atoms: usize,
    pub n_max: usize,
    pub m_max: Option<usize>,
}

impl OracleSpace {
    pub fn new(n_atoms: usize, n_max: usize) -> Self {
        Self { n_atoms, n_max, m_max: None }
    }

    pub fn with_filter(n_atoms: usize, n_max: usize, m_max: usize) -> Self {
        Self { n_atoms, n_max, m_max: Some(m_max) }
    }

    pub fn nc(&self) -> usize {
        self.n_max + 1
    }

    pub fn nf(&self) -> usize {
        self.m_max.map_or(1, |m| m + 1)
    }

    pub fn dim(&self) -> usize {
        (1 << self.n_atoms) * self.nc() * self.nf()
    }

    pub fn index(&self, bits: usize, n: usize, m: usize) -> usize {
        (bits * self.nc() + n) * self.nf() + m
    }

    pub fn decode(&self, k: usize) -> (usize, usize, usize) {
        let m = k % self.nf();
        let rest = k / self.nf();
        (rest / self.nc(), rest % self.nc(), m)
    }

    /// Total excitation number, conserved by the coherent dynamics.
    pub fn excitations(&self, k: usize) -> usize {
        let (bits, n, m) = self.decode(k);
        bits.count_ones() as usize + n + m
    }
}

/// Operator with at most one non-zero entry per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Mono {
    target: Vec<u32>,
    coef: Vec<f64>,
}

impl Mono {
    fn from_fn(dim: usize, f: impl Fn(usize) -> Option<(usize, f64)>) -> Self {
        let mut target = vec![NONE; dim];
        let mut coef = vec![0.0; dim];
        for k in 0..dim {
            if let Some((t, c)) = f(k) {
                if c != 0.0 {
                    target[k] = t as u32;
                    coef[k] = c;
                }
            }
        }
        Self { target, coef }
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// Image of basis state `k` as `(index, coefficient)`.
    #[inline]
    pub fn apply(&self, k: usize) -> Option<(usize, f64)> {
        let t = self.target[k];
        (t != NONE).then(|| (t as usize, self.coef[k]))
    }

    pub fn identity(space: &OracleSpace) -> Self {
        Self::from_fn(space.dim(), |k| Some((k, 1.0)))
    }

    /// Cavity annihilation.
    pub fn a(space: &OracleSpace) -> Self {
        Self::from_fn(space.dim(), |k| {
            let (b, n, m) = space.decode(k);
            (n > 0).then(|| (space.index(b, n - 1, m), (n as f64).sqrt()))
        })
    }

    /// Filter annihilation; the zero operator without a filter mode.
    pub fn f(space: &OracleSpace) -> Self {
        Self::from_fn(space.dim(), |k| {
            let (b, n, m) = space.decode(k);
            (m > 0).then(|| (space.index(b, n, m - 1), (m as f64).sqrt()))
        })
    }

    /// σ⁻ on atom `i`.
    pub fn sm(space: &OracleSpace, i: usize) -> Self {
        Self::from_fn(space.dim(), |k| {
            let (b, n, m) = space.decode(k);
            (b >> i & 1 == 1).then(|| (space.index(b & !(1 << i), n, m), 1.0))
        })
    }

    /// σᶻ on atom `i`.
    pub fn sz(space: &OracleSpace, i: usize) -> Self {
        Self::from_fn(space.dim(), |k| {
            let (b, _, _) = space.decode(k);
            Some((k, if b >> i & 1 == 1 { 1.0 } else { -1.0 }))
        })
    }

    pub fn adjoint(&self) -> Self {
        let dim = self.dim();
        let mut target = vec![NONE; dim];
        let mut coef = vec![0.0; dim];
        for k in 0..dim {
            if let Some((t, c)) = self.apply(k) {
                target[t] = k as u32;
                coef[t] = c;
            }
        }
        Self { target, coef }
    }

    /// `self · rhs`
    pub fn then_after(&self, rhs: &Mono) -> Self {
        Self::from_fn(self.dim(), |k| {
            let (t1, c1) = rhs.apply(k)?;
            let (t2, c2) = self.apply(t1)?;
            Some((t2, c1 * c2))
        })
    }

    /// `Tr[O ρ]` with `ρ` given by its entries.
    pub fn expect(&self, rho: impl Fn(usize, usize) -> c64) -> c64 {
        // Tr[Oρ] = Σ_l ⟨l|O ρ|l⟩ = Σ_k O[t,k] ρ[k,t]
        let mut acc = c64::new(0.0, 0.0);
        for k in 0..self.dim() {
            if let Some((t, c)) = self.apply(k) {
                acc += rho(k, t) * c;
            }
        }
        acc
    }
}

/// Superoperator term `ρ ↦ α · A ρ B`, stored with `B†` so that
/// `A|k⟩⟨l|B = c_A c_B |A k⟩⟨B† l|`.
#[derive(Debug, Clone)]
pub struct Term {
    pub alpha: c64,
    pub left: Mono,
    pub right_adj: Mono,
}

//! Composite electron-nuclear Hilbert space.
//!
//! The electron is a dressed qubit with basis `{|+⟩, |−⟩}` in tensor slot 0;
//! nucleus `j` (zero-based) is a spin-½ with basis `{|↑⟩, |↓⟩}` in slot
//! `j + 1`. In this basis the rotating-frame Hamiltonian reads
//!
//! ```text
//! H = ω_e σ_z/2 + Σ_j ω_{n,j} I_jᶻ + ½ σ_x Σ_j (A_jˣ I_jˣ + A_jᶻ I_jᶻ)
//! ```
//!
//! with `ω_{n,j} = γ_j B_z + A_jᶻ/2`. The lab qubit states are
//! `|1⟩ = (|+⟩ + |−⟩)/√2` and `|0⟩ = (|+⟩ − |−⟩)/√2`, so a microwave
//! detuning `Δ` enters as `Δ σ_x/2`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DcsError, Result};
use crate::linalg::{self, hermiticity_defect, identity, kron};
use crate::scalar::{c, re, CMatrix, CVector, Real};

const GYROMAGNETIC_TABLE: &str = include_str!("../data/gyromagnetic_ratios.toml");

#[derive(Deserialize)]
struct SpeciesTable {
    species: Vec<SpeciesEntry>,
}

#[derive(Deserialize)]
struct SpeciesEntry {
    name: String,
    gamma_mhz_per_tesla: f64,
}

fn species_table() -> &'static BTreeMap<String, f64> {
    static TABLE: OnceLock<BTreeMap<String, f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let parsed: SpeciesTable =
            toml::from_str(GYROMAGNETIC_TABLE).expect("bundled gyromagnetic table parses");
        parsed
            .species
            .into_iter()
            .map(|s| (s.name, s.gamma_mhz_per_tesla))
            .collect()
    })
}

/// Lookup into the bundled table of nuclear gyromagnetic ratios.
pub struct Species;

impl Species {
    /// `γ/(2π)` in MHz/T.
    pub fn gamma_mhz_per_tesla(name: &str) -> Option<f64> {
        species_table().get(name).copied()
    }

    /// `γ` in rad/s/T.
    pub fn gyromagnetic_ratio<T: Real>(name: &str) -> Option<T> {
        Self::gamma_mhz_per_tesla(name).map(|g| T::lit(g * 1e6 * std::f64::consts::TAU))
    }

    pub fn names() -> Vec<&'static str> {
        species_table().keys().map(String::as_str).collect()
    }
}

/// A spin-½ nucleus coupled to the electron qubit.
#[derive(Clone, Debug, PartialEq)]
pub struct Nucleus<T: Real> {
    /// rad/s/T
    pub gyromagnetic_ratio: T,
    /// Aˣ in rad/s
    pub hyperfine_x: T,
    /// Aᶻ in rad/s
    pub hyperfine_z: T,
    pub label: String,
}

impl<T: Real> Nucleus<T> {
    pub fn new(label: impl Into<String>, gyromagnetic_ratio: T, hyperfine_x: T, hyperfine_z: T) -> Result<Self> {
        let n = Self {
            gyromagnetic_ratio,
            hyperfine_x,
            hyperfine_z,
            label: label.into(),
        };
        if !(n.gyromagnetic_ratio.is_finite() && n.hyperfine_x.is_finite() && n.hyperfine_z.is_finite()) {
            return Err(DcsError::InvalidParameter(format!(
                "nucleus {} has non-finite parameters",
                n.label
            )));
        }
        Ok(n)
    }

    /// Nucleus of a tabulated species.
    pub fn of_species(species: &str, hyperfine_x: T, hyperfine_z: T) -> Result<Self> {
        let gamma = Species::gyromagnetic_ratio::<T>(species)
            .ok_or_else(|| DcsError::InvalidParameter(format!("unknown nuclear species {species:?}")))?;
        Self::new(species, gamma, hyperfine_x, hyperfine_z)
    }
}

/// Electron qubit plus an ordered list of nuclei in a static field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem<T: Real> {
    /// tesla
    pub field_z: T,
    pub nuclei: Vec<Nucleus<T>>,
}

impl<T: Real> SpinSystem<T> {
    pub fn new(field_z: T, nuclei: Vec<Nucleus<T>>) -> Self {
        Self { field_z, nuclei }
    }

    /// Bare driven qubit.
    pub fn bare() -> Self {
        Self::new(T::zero(), Vec::new())
    }

    pub fn slots(&self) -> usize {
        1 + self.nuclei.len()
    }

    pub fn dimension(&self) -> usize {
        2 << self.nuclei.len()
    }

    pub fn nuclear_frequency(&self, j: usize) -> T {
        nuclear_frequency(&self.nuclei[j], self.field_z)
    }

    /// Same system with every hyperfine component set to zero.
    pub fn decoupled(&self) -> Self {
        let nuclei = self
            .nuclei
            .iter()
            .map(|n| Nucleus {
                hyperfine_x: T::zero(),
                hyperfine_z: T::zero(),
                ..n.clone()
            })
            .collect();
        Self::new(self.field_z, nuclei)
    }
}

/// A named Hermitian operator on the composite space.
#[derive(Clone, Debug)]
pub struct Observable<T: Real> {
    pub name: String,
    pub matrix: CMatrix<T>,
}

impl<T: Real> Observable<T> {
    pub fn new(name: impl Into<String>, matrix: CMatrix<T>) -> Result<Self> {
        let name = name.into();
        if !matrix.is_square() {
            return Err(DcsError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let scale = T::one().max(linalg::max_abs(&matrix));
        let defect = hermiticity_defect(&matrix);
        if defect > T::validation_tol() * scale {
            return Err(DcsError::InvalidParameter(format!(
                "observable {name} is not Hermitian (defect {defect})"
            )));
        }
        Ok(Self { name, matrix })
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Single-slot operators in the fixed basis.
pub mod local {
    use super::*;

    fn m<T: Real>(a: [[(f64, f64); 2]; 2]) -> CMatrix<T> {
        DMatrix::from_fn(2, 2, |i, j| c(T::lit(a[i][j].0), T::lit(a[i][j].1)))
    }

    pub fn identity<T: Real>() -> CMatrix<T> {
        m([[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (1.0, 0.0)]])
    }
    pub fn sigma_x<T: Real>() -> CMatrix<T> {
        m([[(0.0, 0.0), (1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]])
    }
    pub fn sigma_y<T: Real>() -> CMatrix<T> {
        m([[(0.0, 0.0), (0.0, -1.0)], [(0.0, 1.0), (0.0, 0.0)]])
    }
    pub fn sigma_z<T: Real>() -> CMatrix<T> {
        m([[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (-1.0, 0.0)]])
    }
    /// `σ₊ = |+⟩⟨−|`
    pub fn sigma_plus<T: Real>() -> CMatrix<T> {
        m([[(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 0.0)]])
    }
    pub fn sigma_minus<T: Real>() -> CMatrix<T> {
        sigma_plus::<T>().adjoint()
    }
    pub fn spin_x<T: Real>() -> CMatrix<T> {
        sigma_x::<T>() * re(T::lit(0.5))
    }
    pub fn spin_y<T: Real>() -> CMatrix<T> {
        sigma_y::<T>() * re(T::lit(0.5))
    }
    pub fn spin_z<T: Real>() -> CMatrix<T> {
        sigma_z::<T>() * re(T::lit(0.5))
    }
    /// `I⁺ = |↑⟩⟨↓|`
    pub fn spin_plus<T: Real>() -> CMatrix<T> {
        sigma_plus()
    }
    pub fn spin_minus<T: Real>() -> CMatrix<T> {
        sigma_minus()
    }
}

/// Places `local_op` at `slot` with identities elsewhere.
pub fn embed_operator<T: Real>(local_op: &CMatrix<T>, slot: usize, system: &SpinSystem<T>) -> Result<CMatrix<T>> {
    embed_in_slots(local_op, slot, system.slots())
}

pub(crate) fn embed_in_slots<T: Real>(local_op: &CMatrix<T>, slot: usize, slots: usize) -> Result<CMatrix<T>> {
    if local_op.nrows() != 2 || local_op.ncols() != 2 {
        return Err(DcsError::LocalDimension {
            rows: local_op.nrows(),
            cols: local_op.ncols(),
        });
    }
    if slot >= slots {
        return Err(DcsError::SlotOutOfRange { slot, slots });
    }
    let id = local::identity::<T>();
    let mut out = identity::<T>(1);
    for s in 0..slots {
        out = kron(&out, if s == slot { local_op } else { &id });
    }
    Ok(out)
}

/// Hermitian embedding with a name attached.
pub fn embed_observable<T: Real>(
    name: impl Into<String>,
    local_op: &CMatrix<T>,
    slot: usize,
    system: &SpinSystem<T>,
) -> Result<Observable<T>> {
    Observable::new(name, embed_operator(local_op, slot, system)?)
}

/// Hyperfine-shifted nuclear frequency `γ B_z + Aᶻ/2`.
pub fn nuclear_frequency<T: Real>(nucleus: &Nucleus<T>, field_z: T) -> T {
    nucleus.gyromagnetic_ratio * field_z + nucleus.hyperfine_z * T::lit(0.5)
}

pub fn sigma_z<T: Real>(system: &SpinSystem<T>) -> Observable<T> {
    embed_observable("sigma_z", &local::sigma_z(), 0, system).expect("slot 0 always exists")
}

pub fn sigma_x<T: Real>(system: &SpinSystem<T>) -> Observable<T> {
    embed_observable("sigma_x", &local::sigma_x(), 0, system).expect("slot 0 always exists")
}

/// `I_jᶻ` with `j` zero-based; named with the one-based label `I_z[j+1]`.
pub fn nuclear_iz<T: Real>(system: &SpinSystem<T>, j: usize) -> Result<Observable<T>> {
    embed_observable(format!("I_z[{}]", j + 1), &local::spin_z(), j + 1, system)
}

pub fn nuclear_ix<T: Real>(system: &SpinSystem<T>, j: usize) -> Result<Observable<T>> {
    embed_observable(format!("I_x[{}]", j + 1), &local::spin_x(), j + 1, system)
}

/// Drive-independent part of the Hamiltonian.
pub(crate) fn static_hamiltonian<T: Real>(system: &SpinSystem<T>) -> CMatrix<T> {
    let slots = system.slots();
    let dim = system.dimension();
    let sx = embed_in_slots(&local::sigma_x(), 0, slots).expect("slot 0");
    let mut zeeman = linalg::zeros::<T>(dim);
    let mut coupling = linalg::zeros::<T>(dim);
    for (j, nucleus) in system.nuclei.iter().enumerate() {
        let iz = embed_in_slots(&local::spin_z(), j + 1, slots).expect("nuclear slot");
        let ix = embed_in_slots(&local::spin_x(), j + 1, slots).expect("nuclear slot");
        zeeman += &iz * re(nuclear_frequency(nucleus, system.field_z));
        coupling += ix * re(nucleus.hyperfine_x) + iz * re(nucleus.hyperfine_z);
    }
    zeeman + sx * coupling * re(T::lit(0.5))
}

/// Rotating-frame Hamiltonian for a dressed splitting `omega_e`.
pub fn build_hamiltonian<T: Real>(system: &SpinSystem<T>, omega_e: T) -> Observable<T> {
    hamiltonian_with_detuning(system, omega_e, T::zero())
}

/// As [`build_hamiltonian`] plus a microwave detuning `Δ σ_x/2`.
pub fn hamiltonian_with_detuning<T: Real>(system: &SpinSystem<T>, omega_e: T, detuning: T) -> Observable<T> {
    let slots = system.slots();
    let sz = embed_in_slots(&local::sigma_z(), 0, slots).expect("slot 0");
    let sx = embed_in_slots(&local::sigma_x(), 0, slots).expect("slot 0");
    let half = T::lit(0.5);
    let h = static_hamiltonian(system) + sz * re(omega_e * half) + sx * re(detuning * half);
    Observable { name: "H".into(), matrix: h }
}

/// Density operator, pure vector, or a weighted ensemble of pure vectors.
#[derive(Clone, Debug)]
pub enum QuantumState<T: Real> {
    Pure(CVector<T>),
    Mixed(CMatrix<T>),
    Ensemble(Vec<(T, CVector<T>)>),
}

impl<T: Real> QuantumState<T> {
    pub fn dimension(&self) -> usize {
        match self {
            QuantumState::Pure(v) => v.len(),
            QuantumState::Mixed(m) => m.nrows(),
            QuantumState::Ensemble(e) => e.first().map_or(0, |(_, v)| v.len()),
        }
    }

    pub fn to_density(&self) -> CMatrix<T> {
        match self {
            QuantumState::Pure(v) => v * v.adjoint(),
            QuantumState::Mixed(m) => m.clone(),
            QuantumState::Ensemble(e) => {
                let dim = self.dimension();
                e.iter()
                    .fold(linalg::zeros::<T>(dim), |acc, (w, v)| acc + v * v.adjoint() * re(*w))
            }
        }
    }

    pub fn trace(&self) -> T {
        match self {
            QuantumState::Pure(v) => v.norm_squared(),
            QuantumState::Mixed(m) => linalg::trace(m).re,
            QuantumState::Ensemble(e) => e.iter().fold(T::zero(), |s, (w, v)| s + *w * v.norm_squared()),
        }
    }

    pub fn is_finite(&self) -> bool {
        let finite = |z: &Complex<T>| z.re.is_finite() && z.im.is_finite();
        match self {
            QuantumState::Pure(v) => v.iter().all(finite),
            QuantumState::Mixed(m) => m.iter().all(finite),
            QuantumState::Ensemble(e) => e.iter().all(|(w, v)| w.is_finite() && v.iter().all(finite)),
        }
    }

    /// Checks the trace, Hermiticity, positivity and normalisation invariants.
    pub fn validate(&self) -> Result<()> {
        let tol = T::validation_tol();
        if !self.is_finite() {
            return Err(DcsError::InvalidState("non-finite entries".into()));
        }
        match self {
            QuantumState::Pure(v) => {
                let n = v.norm();
                if (n - T::one()).abs() > tol {
                    return Err(DcsError::InvalidState(format!("vector norm {n} differs from 1")));
                }
            }
            QuantumState::Mixed(m) => {
                if !m.is_square() {
                    return Err(DcsError::InvalidState("density matrix is not square".into()));
                }
                let h = hermiticity_defect(m);
                if h > tol {
                    return Err(DcsError::InvalidState(format!("density matrix not Hermitian ({h})")));
                }
                let tr = linalg::trace(m);
                if (tr.re - T::one()).abs() > tol || tr.im.abs() > tol {
                    return Err(DcsError::InvalidState(format!("trace {tr} differs from 1")));
                }
                let floor = -T::lit(1e-10).max(T::validation_tol());
                let eig = linalg::HermitianEigen::new(m);
                if let Some(min) = eig.values.iter().copied().reduce(|a, b| a.min(b)) {
                    if min < floor {
                        return Err(DcsError::InvalidState(format!("negative eigenvalue {min}")));
                    }
                }
            }
            QuantumState::Ensemble(e) => {
                if e.is_empty() {
                    return Err(DcsError::InvalidState("empty ensemble".into()));
                }
                let dim = self.dimension();
                let mut total = T::zero();
                for (w, v) in e {
                    if *w < T::zero() || v.len() != dim {
                        return Err(DcsError::InvalidState("bad ensemble member".into()));
                    }
                    if (v.norm() - T::one()).abs() > tol {
                        return Err(DcsError::InvalidState("ensemble member not normalised".into()));
                    }
                    total += *w;
                }
                if (total - T::one()).abs() > tol {
                    return Err(DcsError::InvalidState(format!("ensemble weights sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// `ρ → U ρ U†` applied to whichever representation is held.
    pub fn evolve(&mut self, u: &CMatrix<T>) {
        match self {
            QuantumState::Pure(v) => *v = u * &*v,
            QuantumState::Mixed(m) => *m = u * &*m * u.adjoint(),
            QuantumState::Ensemble(e) => {
                for (_, v) in e.iter_mut() {
                    *v = u * &*v;
                }
            }
        }
    }
}

/// `Tr[ρ O]`; the imaginary residue is checked and discarded.
pub fn expectation<T: Real>(state: &QuantumState<T>, obs: &Observable<T>) -> Result<T> {
    expectation_of(state, &obs.matrix)
}

pub(crate) fn expectation_of<T: Real>(state: &QuantumState<T>, op: &CMatrix<T>) -> Result<T> {
    let dim = state.dimension();
    if op.nrows() != dim {
        return Err(DcsError::DimensionMismatch {
            expected: dim,
            found: op.nrows(),
        });
    }
    let bra_ket = |v: &CVector<T>| v.dotc(&(op * v));
    let value: Complex<T> = match state {
        QuantumState::Pure(v) => bra_ket(v),
        QuantumState::Mixed(m) => linalg::trace(&(m * op)),
        QuantumState::Ensemble(e) => e.iter().fold(re(T::zero()), |s, (w, v)| s + bra_ket(v) * re(*w)),
    };
    let scale = T::one().max(linalg::max_abs(op));
    if value.im.abs() > T::unitarity_tol() * scale {
        return Err(DcsError::InvalidState(format!(
            "expectation has imaginary part {} (operator not Hermitian?)",
            value.im
        )));
    }
    Ok(value.re)
}

/// Initial electron preparation used by the experiment families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialStateKind {
    /// `|+⟩`, the σ_z eigenstate of the dressed qubit.
    Sensing,
    /// Same preparation as sensing.
    DnpDcs,
    /// Lab qubit state `|1⟩`, i.e. spin along the static field.
    TopdnpParallel,
    /// `|+⟩`, spin perpendicular to the static field.
    TopdnpPerpendicular,
}

impl InitialStateKind {
    pub fn electron_vector<T: Real>(self) -> CVector<T> {
        match self {
            Self::Sensing | Self::DnpDcs | Self::TopdnpPerpendicular => {
                DVector::from_vec(vec![re(T::one()), re(T::zero())])
            }
            Self::TopdnpParallel => {
                let a = T::one() / T::lit(2.0).sqrt();
                DVector::from_vec(vec![re(a), re(a)])
            }
        }
    }
}

/// Electron preparation times a maximally mixed nuclear bath, held as an
/// equal-weight ensemble over the nuclear computational basis.
pub fn initial_state<T: Real>(kind: InitialStateKind, system: &SpinSystem<T>) -> QuantumState<T> {
    product_with_mixed_nuclei(&kind.electron_vector(), system.nuclei.len())
}

pub(crate) fn product_with_mixed_nuclei<T: Real>(electron: &CVector<T>, n_nuclei: usize) -> QuantumState<T> {
    let branches = 1usize << n_nuclei;
    let weight = T::one() / T::lit(branches as f64);
    let members = (0..branches)
        .map(|b| {
            let mut nuclear = DVector::from_element(1, re(T::one()));
            for j in 0..n_nuclei {
                // bit set means |↓⟩ for nucleus j (most significant = first nucleus)
                let down = (b >> (n_nuclei - 1 - j)) & 1 == 1;
                let local = if down {
                    DVector::from_vec(vec![re(T::zero()), re(T::one())])
                } else {
                    DVector::from_vec(vec![re(T::one()), re(T::zero())])
                };
                nuclear = nuclear.kronecker(&local);
            }
            (weight, electron.kronecker(&nuclear))
        })
        .collect();
    QuantumState::Ensemble(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn carbon_system() -> SpinSystem<f64> {
        let n = Nucleus::of_species("13C", TAU * 13.42e3, TAU * 17.09e3).unwrap();
        SpinSystem::new(1.0, vec![n])
    }

    fn diag(m: &CMatrix<f64>) -> Vec<f64> {
        m.diagonal().iter().map(|z| z.re).collect()
    }

    #[test]
    fn embed_identity_is_identity() {
        let sys = carbon_system();
        for slot in 0..2 {
            let e = embed_operator(&local::identity(), slot, &sys).unwrap();
            assert_eq!(e, identity::<f64>(4));
        }
    }

    #[test]
    fn embed_sigma_z_and_iz() {
        let sys = carbon_system();
        let sz = embed_operator(&local::sigma_z(), 0, &sys).unwrap();
        assert_eq!(diag(&sz), vec![1.0, 1.0, -1.0, -1.0]);
        let iz = embed_operator(&local::spin_z(), 1, &sys).unwrap();
        assert_eq!(diag(&iz), vec![0.5, -0.5, 0.5, -0.5]);
        assert!(linalg::max_abs(&(&sz - CMatrix::from_diagonal(&sz.diagonal()))) == 0.0);
    }

    #[test]
    fn embed_errors() {
        let sys = carbon_system();
        assert_eq!(
            embed_operator(&local::sigma_z(), 2, &sys),
            Err(DcsError::SlotOutOfRange { slot: 2, slots: 2 })
        );
        let big = identity::<f64>(3);
        assert_eq!(
            embed_operator(&big, 0, &sys),
            Err(DcsError::LocalDimension { rows: 3, cols: 3 })
        );
    }

    #[test]
    fn carbon_frequency_near_reported_resonance() {
        let sys = carbon_system();
        let f = sys.nuclear_frequency(0) / TAU;
        // reported as ≈ 10.713 MHz
        assert!((f - 10.713e6).abs() < 1e3, "{f}");
    }

    #[test]
    fn proton_frequency_near_reported_value() {
        let n = Nucleus::of_species("1H", TAU * 0.5e3, TAU * 0.5e3).unwrap();
        let f = nuclear_frequency(&n, 0.35) / TAU;
        assert!((f - 14.9e6).abs() < 0.05e6, "{f}");
        assert!((f - 14.902375e6).abs() < 1e-3);
    }

    #[test]
    fn zero_field_zero_hyperfine_frequency() {
        let n = Nucleus::of_species("1H", 0.0, 0.0).unwrap();
        assert_eq!(nuclear_frequency(&n, 0.0), 0.0);
    }

    #[test]
    fn bare_qubit_hamiltonian() {
        let sys = SpinSystem::<f64>::bare();
        let h = build_hamiltonian(&sys, 2.0);
        assert_eq!(h.dimension(), 2);
        assert_eq!(diag(&h.matrix), vec![1.0, -1.0]);
        assert_eq!(h.matrix[(0, 1)], re(0.0));
    }

    #[test]
    fn free_precession_hamiltonian() {
        let sys = carbon_system().decoupled();
        let h = build_hamiltonian(&sys, 0.0);
        let iz = embed_operator(&local::spin_z(), 1, &sys).unwrap();
        let expected = iz * re(sys.nuclear_frequency(0));
        assert!(linalg::max_abs(&(h.matrix - expected)) < 1e-9);
    }

    /// Hand-assembled 4×4 matrix of the carbon system, entry by entry.
    #[test]
    fn carbon_hamiltonian_matches_hand_assembly() {
        let sys = carbon_system();
        let (ax, az) = (TAU * 13.42e3, TAU * 17.09e3);
        let wn = sys.nuclear_frequency(0);
        let we = TAU * 1e6;
        // basis |+↑⟩, |+↓⟩, |−↑⟩, |−↓⟩
        // ω_e σ_z/2 + ω_n I_z on the diagonal
        // ½σ_x(Aˣ I_x + Aᶻ I_z): σ_x flips the electron, I_x flips the nucleus
        let mut m = [[0.0f64; 4]; 4];
        m[0][0] = we / 2.0 + wn / 2.0;
        m[1][1] = we / 2.0 - wn / 2.0;
        m[2][2] = -we / 2.0 + wn / 2.0;
        m[3][3] = -we / 2.0 - wn / 2.0;
        // ⟨+↑|·|−↑⟩ = ½·Aᶻ·½
        m[0][2] = az / 4.0;
        m[2][0] = az / 4.0;
        m[1][3] = -az / 4.0;
        m[3][1] = -az / 4.0;
        // ⟨+↑|·|−↓⟩ = ½·Aˣ·½
        m[0][3] = ax / 4.0;
        m[3][0] = ax / 4.0;
        m[1][2] = ax / 4.0;
        m[2][1] = ax / 4.0;
        let hand = DMatrix::from_fn(4, 4, |i, j| re(m[i][j]));
        let h = build_hamiltonian(&sys, we);
        assert!(linalg::max_abs(&(h.matrix - hand)) < 1e-6);
    }

    #[test]
    fn expectation_examples() {
        let sys = carbon_system();
        let rho = initial_state(InitialStateKind::Sensing, &sys);
        assert!((expectation(&rho, &sigma_z(&sys)).unwrap() - 1.0).abs() < 1e-15);
        assert!(expectation(&rho, &nuclear_iz(&sys, 0).unwrap()).unwrap().abs() < 1e-15);
        let mixed = QuantumState::Mixed(identity::<f64>(4) * re(0.25));
        mixed.validate().unwrap();
        assert!(expectation(&mixed, &sigma_z(&sys)).unwrap().abs() < 1e-15);
        let wrong = QuantumState::Mixed(identity::<f64>(2) * re(0.5));
        assert!(matches!(
            expectation(&wrong, &sigma_z(&sys)),
            Err(DcsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn initial_states() {
        let sys = carbon_system();
        let s = initial_state(InitialStateKind::Sensing, &sys);
        s.validate().unwrap();
        QuantumState::Mixed(s.to_density()).validate().unwrap();
        assert!((s.trace() - 1.0).abs() < 1e-15);

        // parallel: |1⟩⟨1| = (1 + σ_x)/2 on the qubit, so ⟨σ_x⟩ = 1 and ⟨σ_z⟩ = 0
        let p = initial_state(InitialStateKind::TopdnpParallel, &sys);
        assert!((expectation(&p, &sigma_x(&sys)).unwrap() - 1.0).abs() < 1e-14);
        assert!(expectation(&p, &sigma_z(&sys)).unwrap().abs() < 1e-14);

        let bare = initial_state(InitialStateKind::Sensing, &SpinSystem::<f64>::bare());
        let rho = bare.to_density();
        assert_eq!(rho.nrows(), 2);
        assert!((linalg::trace(&rho).re - 1.0).abs() < 1e-15);
        assert_eq!(rho[(0, 0)], re(1.0));
    }

    #[test]
    fn invalid_states_rejected() {
        let bad = QuantumState::Mixed(identity::<f64>(2));
        assert!(bad.validate().is_err());
        let neg = QuantumState::Mixed(DMatrix::from_diagonal(&DVector::from_vec(vec![re(1.5), re(-0.5)])));
        assert!(neg.validate().is_err());
        let unnorm = QuantumState::Pure(DVector::from_vec(vec![re(1.0), re(1.0)]));
        assert!(unnorm.validate().is_err());
    }

    #[test]
    fn decoupled_hamiltonian_commutes_with_populations() {
        let n2 = Nucleus::of_species("1H", 1e4, 2e4).unwrap();
        let sys = SpinSystem::new(0.35, vec![carbon_system().nuclei[0].clone(), n2]).decoupled();
        let h = build_hamiltonian(&sys, 3e6).matrix;
        assert!(linalg::max_abs(&linalg::commutator(&h, &sigma_z(&sys).matrix)) < 1e-6);
        for j in 0..2 {
            let iz = nuclear_iz(&sys, j).unwrap().matrix;
            assert!(linalg::max_abs(&linalg::commutator(&h, &iz)) < 1e-6);
        }
    }

    #[test]
    fn f32_hamiltonian_is_hermitian() {
        let n = Nucleus::<f32>::of_species("13C", 8.0e4, 1.0e5).unwrap();
        let sys = SpinSystem::new(1.0f32, vec![n]);
        let h = build_hamiltonian(&sys, 6.0e6);
        assert!(hermiticity_defect(&h.matrix) == 0.0);
    }

    fn hermitian2(a: f64, b: f64, x: f64, y: f64) -> CMatrix<f64> {
        DMatrix::from_fn(2, 2, |i, j| match (i, j) {
            (0, 0) => re(a),
            (1, 1) => re(b),
            (0, 1) => c(x, y),
            _ => c(x, -y),
        })
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian(
            b in 0.0f64..3.0,
            we in -1e7f64..1e7,
            ax in -1e5f64..1e5,
            az in -1e5f64..1e5,
            ax2 in -1e5f64..1e5,
        ) {
            let sys = SpinSystem::new(b, vec![
                Nucleus::of_species("13C", ax, az).unwrap(),
                Nucleus::of_species("1H", ax2, -az).unwrap(),
            ]);
            let h = build_hamiltonian(&sys, we);
            prop_assert!(hermiticity_defect(&h.matrix) < 1e-12);
        }

        #[test]
        fn disjoint_slots_commute(
            p in prop::array::uniform4(-1.0f64..1.0),
            q in prop::array::uniform4(-1.0f64..1.0),
            i in 0usize..3,
            j in 0usize..3,
        ) {
            prop_assume!(i != j);
            let sys = SpinSystem::new(1.0, vec![
                Nucleus::of_species("13C", 0.0, 0.0).unwrap(),
                Nucleus::of_species("1H", 0.0, 0.0).unwrap(),
            ]);
            let a = embed_operator(&hermitian2(p[0], p[1], p[2], p[3]), i, &sys).unwrap();
            let b = embed_operator(&hermitian2(q[0], q[1], q[2], q[3]), j, &sys).unwrap();
            prop_assert!(linalg::max_abs(&linalg::commutator(&a, &b)) < 1e-14);
        }

        #[test]
        fn nuclear_frequency_is_linear(b1 in -2.0f64..2.0, b2 in -2.0f64..2.0, a1 in -1e5f64..1e5, a2 in -1e5f64..1e5) {
            let n = |az| Nucleus::of_species("13C", 0.0, az).unwrap();
            let f = |b, az| nuclear_frequency(&n(az), b);
            let lhs = f(b1 + b2, a1 + a2);
            let rhs = f(b1, a1) + f(b2, a2);
            prop_assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(1.0));
        }

        #[test]
        fn identity_expectation_is_one(angle in 0.0f64..6.3, w in 0.0f64..1.0) {
            let v = DVector::from_vec(vec![re(angle.cos()), c(0.0, angle.sin())]);
            let pure = product_with_mixed_nuclei(&v, 1).to_density() * re(w);
            let mixed = pure + identity::<f64>(4) * re((1.0 - w) / 4.0);
            let rho = QuantumState::Mixed(mixed);
            rho.validate().unwrap();
            let id = Observable::new("1", identity::<f64>(4)).unwrap();
            prop_assert!((expectation(&rho, &id).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

//! Named initial states and the textual state specification used by the CLI.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::state::{c64, make_state, StateVector};

/// `(i√5|00⟩ − |01⟩ + i|10⟩ + |11⟩)/√8`: asymptotic disentanglement.
pub fn fig1_dashed() -> StateVector {
    let s = 8f64.sqrt().recip();
    make_state([
        c64(0.0, 5f64.sqrt() * s),
        c64(-s, 0.0),
        c64(0.0, s),
        c64(s, 0.0),
    ])
    .expect("preset is normalized")
}

/// `(|00⟩ − |01⟩ + i|10⟩ + i√5|11⟩)/√8`: finite-time disentanglement.
pub fn fig1_solid() -> StateVector {
    let s = 8f64.sqrt().recip();
    make_state([
        c64(s, 0.0),
        c64(-s, 0.0),
        c64(0.0, s),
        c64(0.0, 5f64.sqrt() * s),
    ])
    .expect("preset is normalized")
}

/// `(|01⟩ + |10⟩)/√2`.
pub fn bell() -> StateVector {
    make_state([
        c64(0.0, 0.0),
        c64(FRAC_1_SQRT_2, 0.0),
        c64(FRAC_1_SQRT_2, 0.0),
        c64(0.0, 0.0),
    ])
    .expect("preset is normalized")
}

pub const PRESET_NAMES: [&str; 3] = ["fig1-dashed", "fig1-solid", "bell"];

/// Parses a preset name or eight comma-separated reals
/// `Re ψ₀₀, Im ψ₀₀, Re ψ₀₁, Im ψ₀₁, Re ψ₁₀, Im ψ₁₀, Re ψ₁₁, Im ψ₁₁`.
pub fn parse_state(spec: &str) -> Result<StateVector> {
    match spec.trim() {
        "fig1-dashed" => return Ok(fig1_dashed()),
        "fig1-solid" => return Ok(fig1_solid()),
        "bell" => return Ok(bell()),
        _ => {}
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidConfig(format!("state '{spec}': {e}")))?;
    if values.len() != 8 {
        return Err(Error::InvalidConfig(format!(
            "state '{spec}': expected a preset ({}) or 8 reals, got {} values",
            PRESET_NAMES.join(", "),
            values.len()
        )));
    }
    let amps: Vec<Complex64> = values.chunks(2).map(|p| c64(p[0], p[1])).collect();
    make_state([amps[0], amps[1], amps[2], amps[3]])
}

/// Eight reals, 17 significant digits, in the same order [`parse_state`] reads.
pub fn format_state(psi: &StateVector) -> String {
    psi.amplitudes()
        .iter()
        .flat_map(|z| [z.re, z.im])
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_hard_coded_amplitudes() {
        let s = 1.0 / 8f64.sqrt();
        let r5 = 5f64.sqrt();
        let dashed = fig1_dashed();
        let expected = [(0.0, r5 * s), (-s, 0.0), (0.0, s), (s, 0.0)];
        for (z, (re, im)) in dashed.amplitudes().iter().zip(expected) {
            assert!((z.re - re).abs() < 1e-15 && (z.im - im).abs() < 1e-15);
        }
        let solid = fig1_solid();
        let expected = [(s, 0.0), (-s, 0.0), (0.0, s), (0.0, r5 * s)];
        for (z, (re, im)) in solid.amplitudes().iter().zip(expected) {
            assert!((z.re - re).abs() < 1e-15 && (z.im - im).abs() < 1e-15);
        }
        assert_eq!(bell().psi11(), c64(0.0, 0.0));
    }

    #[test]
    fn parse_roundtrip() {
        for psi in [fig1_dashed(), fig1_solid(), bell()] {
            let back = parse_state(&format_state(&psi)).unwrap();
            assert_eq!(back, psi);
        }
        assert_eq!(parse_state("1,0,0,0,0,0,0,0").unwrap(), StateVector::basis(0, 0));
        assert!(parse_state("1,0,0").is_err());
        assert!(parse_state("0,0,0,0,0,0,0,0").is_err());
        assert!(parse_state("ghz").is_err());
    }
}

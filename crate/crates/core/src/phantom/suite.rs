//! Phantom suites: the bundled 50-case manifest and a seeded generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{Cohort, Modality};

use super::{anatomy_masks, generate, LesionSpec, PhantomSpec};

pub const SUITE_SEED: u64 = 20_251_015;
const SUITE_JSON: &str = include_str!("../../data/phantom_suite.json");

pub fn bundled_suite_json() -> &'static str {
    SUITE_JSON
}

/// The bundled 50-phantom manifest (both cohorts, 1-4 lesions, with and
/// without enhancement and edema).
pub fn bundled_suite() -> Vec<PhantomSpec> {
    serde_json::from_str(SUITE_JSON).expect("bundled suite parses")
}

const MAX_ATTEMPTS: usize = 2000;

/// `n` valid phantom specs on a 32³ grid, drawn deterministically from `seed`.
pub fn random_suite(seed: u64, n: usize) -> Vec<PhantomSpec> {
    let dims = [32, 32, 32];
    let spacing = [1.0; 3];
    let masks = anatomy_masks(dims, spacing, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let cohort = if i % 2 == 0 { Cohort::MEN } else { Cohort::MET };
        let lesion_count = match cohort {
            Cohort::MEN => 1 + (i / 2) % 2,
            _ => 1 + (i / 2) % 4,
        };
        let compartment = match cohort {
            Cohort::MEN => &masks.dural,
            _ => &masks.parench,
        };
        let candidates: Vec<usize> = (0..compartment.len()).filter(|&v| compartment.data()[v] == 1).collect();
        let uncertain = (i % 7 == 0).then(|| Modality::ALL[(i / 7) % 4]);
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let lesions = (0..lesion_count)
                .map(|_| {
                    let center = compartment.coords(candidates[rng.random_range(0..candidates.len())]);
                    let (lo, hi) = match cohort {
                        Cohort::MEN => (2.5, 4.5),
                        _ => (1.5, 2.5),
                    };
                    let semi_axes_mm = [0; 3].map(|_| (rng.random_range(lo..hi) * 2.0f64).round() / 2.0);
                    let has_et = rng.random_bool(0.8);
                    let has_ed = rng.random_bool(0.6);
                    let ed_rim_mm = if has_ed { rng.random_range(1..=2) as f64 } else { 0.0 };
                    LesionSpec {
                        center,
                        semi_axes_mm,
                        has_et,
                        has_ed,
                        ed_rim_mm,
                    }
                })
                .collect();
            let spec = PhantomSpec {
                dims,
                spacing,
                cohort,
                lesions,
                seed: seed.wrapping_add(i as u64),
                shell_voxels: 2,
                numeral_count: i % 5 == 3,
                uncertain,
            };
            if generate(&spec).is_ok() {
                accepted = Some(spec);
                break;
            }
        }
        out.push(accepted.unwrap_or_else(|| panic!("no valid layout for phantom {i} after {MAX_ATTEMPTS} draws")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_matches_generator() {
        let fresh = random_suite(SUITE_SEED, 50);
        assert_eq!(bundled_suite(), fresh, "regenerate data/phantom_suite.json");
    }

    #[test]
    fn bundled_covers_the_branches() {
        let suite = bundled_suite();
        assert_eq!(suite.len(), 50);
        for cohort in [Cohort::MEN, Cohort::MET] {
            assert!(suite.iter().any(|s| s.cohort == cohort));
        }
        for n in 1..=4 {
            assert!(suite.iter().any(|s| s.lesions.len() == n), "{n} lesions");
        }
        let all = || suite.iter().flat_map(|s| &s.lesions);
        assert!(all().any(|l| l.has_et) && all().any(|l| !l.has_et));
        assert!(all().any(|l| l.has_ed) && all().any(|l| !l.has_ed));
        assert!(suite.iter().any(|s| s.lesions.iter().all(|l| !l.has_ed)));
        assert!(suite.iter().any(|s| s.lesions.iter().all(|l| !l.has_et)));
    }
}

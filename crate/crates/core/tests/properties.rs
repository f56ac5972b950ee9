//! Randomised invariants of the geometry, scoring, losses and optimiser.

mod common;

use common::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn integrated_frames_are_orthonormal(c in curve_case()) {
        frame_orthonormality(&c)?;
    }

    #[test]
    fn vertices_are_equidistant(c in curve_case()) {
        equidistance(&c)?;
    }

    #[test]
    fn tapered_scores_are_unimodal(s in raw_scores()) {
        score_taper_unimodal(&s)?;
    }

    #[test]
    fn masks_are_two_valued(c in mask_case()) {
        mask_two_valued(&c)?;
    }

    #[test]
    fn losses_are_non_negative(c in loss_case()) {
        losses_non_negative(&c)?;
    }

    #[test]
    fn constraint_projection_is_idempotent(c in projection_case()) {
        projection_idempotent(&c)?;
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>()) {
        deterministic(seed)?;
    }
}

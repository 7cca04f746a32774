//! Module invariants under randomized inputs (1000 cases each).

mod props;

const CASES: u32 = 1000;

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name(CASES) {
                    panic!("{e}");
                }
            }
        )*
    };
}

property_tests!(
    svd_factors_are_consistent,
    rotation_exp_is_orthonormal_and_log_inverts,
    rq_recovers_triangular_times_rotation,
    gaussian_blur_is_a_convex_combination,
    sift_descriptors_are_unit_norm,
    mutual_matches_are_one_to_one,
    normalization_centres_and_scales,
    fundamental_is_rank_two_and_exact,
    ransac_samples_are_distinct,
    essential_decomposition_contains_truth,
    triangulation_is_exact,
    resection_round_trips,
    ba_cost_is_monotone,
    tracks_are_valid,
);

mod common;

use ccm_core::ident_lsq::direct_reversion;
use common::{lsq_instance, lsq_scan_deviation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn closed_forms_agree_with_objective_scans() {
    let (dc, dp) = lsq_scan_deviation(2024, 50);
    assert!(dc <= 1.0, "alpha_c off by {dc} steps");
    assert!(dp <= 1.0, "alpha_p off by {dp} steps");
}

#[test]
fn direct_reversion_is_pointwise_ratio() {
    let (s, _) = lsq_instance(&mut ChaCha8Rng::seed_from_u64(5));
    let d = direct_reversion(&s);
    for (i, a) in d.alphas.iter().enumerate() {
        assert_eq!(a.unwrap(), s.p[i] / s.q[i]);
    }
}

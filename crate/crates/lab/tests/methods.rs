use rayon::prelude::*;
use sympwalk_lab::batch::cross_method_trial;

#[test]
fn all_methods_agree_on_shared_triangular_walks() {
    for c in [1.0, 5.0] {
        let trials: Vec<_> = (0..300u64).into_par_iter().map(|seed| cross_method_trial(2000, c, seed).unwrap()).collect();
        let defined: Vec<_> = trials.iter().filter(|t| t.all_defined()).collect();
        assert!(defined.len() >= 290, "c = {c}: only {} trials defined", defined.len());
        for t in defined {
            assert!(t.agree() || t.near_degenerate(1e-4), "c = {c}: {t:?}");
        }
    }
}

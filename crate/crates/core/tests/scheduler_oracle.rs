mod common;

use common::{random_scenario, run_checked, simulation};
use gridbroker::scheduler::Policy;

#[test]
fn selections_match_exhaustive_search_on_random_instances() {
    let mut total = 0;
    for seed in 0..40 {
        let scenario = random_scenario(seed);
        for policy in Policy::ALL {
            let (checked, _) = run_checked(simulation(&scenario, policy, seed))
                .unwrap_or_else(|e| panic!("seed {seed} {policy}: {e}"));
            total += checked;
        }
    }
    assert!(total > 1000, "only {total} selections exercised");
}

use embsp_core::config::{validate, Violation};
use embsp_core::costmodel::*;
use embsp_core::{AllocTable, CostParams, SimConfig};
use proptest::prelude::*;

const GIB: u64 = 1 << 30;

#[test]
fn baseline_io_example() {
    // 4·4·1024 + 2·16·64
    assert_eq!(io_pems1_alltoallv(4, 1024, 64), 16384 + 2048);
    assert_eq!(io_pems1_alltoallv(1, 0, 0), 0);
}

#[test]
fn disk_space_example() {
    assert_eq!(disk_pems2(16, 2, 2 * GIB), 16 * GIB as u128);
    assert_eq!(disk_pems2(16, 2, 2 * GIB) * 2, 32 * GIB as u128);
    assert_eq!(disk_pems1(16, 2 * GIB, 0), disk_pems2(16, 1, 2 * GIB));
}

#[test]
fn sequential_alltoallv_example() {
    // vμ = 4096, (16 - 8)/2 · 64 = 256, 2·16·16 = 512
    assert_eq!(io_alltoallv_seq(4, 2, 1024, 64, 16), 4096 + 256 + 512);
    // 3·4096 + 2·16·64 - 4864
    assert_eq!(delta_vs_baseline(4, 2, 1024, 64, 16), 12288 + 2048 - 4864);
    assert_eq!(direct_count(8, 2), 40);
    assert_eq!(io_alltoallv_seq(6, 6, 0, 1000, 0), 0);
}

#[test]
fn reduce_compute_example() {
    assert_eq!(reduce_compute_time(4, 8, 2, 2), 16.0);
    assert_eq!(reduce_tree_rounds(4), 2);
    assert_eq!(reduce_tree_rounds(1), 0);
}

#[test]
fn zero_costs_predict_zero_time() {
    let x = PredictionInput {
        v: 8,
        p: 2,
        k: 2,
        d: 1,
        mu: 1 << 20,
        omega: 4096,
        block: 4096,
        n: 1000,
        alpha: 4,
        pi: 8,
        epsilon: 4,
        cost: CostParams::default(),
    };
    for t in [time_bcast(&x), time_gather(&x), time_reduce(&x), time_alltoallv_seq(&x), time_alltoallv_par(&x)] {
        assert_eq!(t, 0.0);
    }
}

#[test]
fn config_examples() {
    let mut ok = SimConfig::new(1, 8, 4, 4096 * 16);
    ok.disk_paths = vec!["/tmp".into()];
    assert!(validate(ok).is_ok());
    let mut too_many = SimConfig::new(2, 8, 8, 4096);
    too_many.disk_paths = vec!["/tmp".into()];
    too_many.hosts = vec!["a:1".into(), "b:1".into()];
    assert!(validate(too_many).unwrap_err().contains(|v| matches!(v, Violation::KExceedsLocal { .. })));
    let mut odd = SimConfig::new(2, 7, 1, 4096);
    odd.disk_paths = vec!["/tmp".into()];
    odd.hosts = vec!["a:1".into(), "b:1".into()];
    assert!(validate(odd).unwrap_err().contains(|v| matches!(v, Violation::VNotDivisible { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]
    #[test]
    fn parallel_formula_reduces_to_sequential(k in 1u64..16, m in 1u64..16, mu in 0u64..1 << 24, w in 0u64..1 << 16, b in 1u64..1 << 13) {
        let v = k * m;
        prop_assert_eq!(io_alltoallv_par(v, 1, k, mu, w, b), io_alltoallv_seq(v, k, mu, w, b));
    }
}

proptest! {
    #[test]
    fn validate_is_idempotent(p in 1usize..4, vm in 1usize..5, k in 1usize..5, blocks in 0usize..4) {
        let mut c = SimConfig::new(p, p * vm, k, 4096 * blocks);
        c.disk_paths = vec!["/tmp".into()];
        c.hosts = (0..p).map(|r| format!("h:{r}")).collect();
        if let Ok(once) = validate(c) {
            prop_assert_eq!(validate(once.clone()), Ok(once));
        }
    }

    #[test]
    fn allocator_regions_stay_disjoint(sizes in proptest::collection::vec(1usize..200, 1..30)) {
        let mut t = AllocTable::new(2048);
        let mut live: Vec<(usize, usize)> = Vec::new();
        for (i, s) in sizes.into_iter().enumerate() {
            if i % 3 == 2 && !live.is_empty() {
                let (off, _) = live.remove(i % live.len());
                t.free(off).unwrap();
            } else if let Ok(off) = t.alloc(s) {
                prop_assert!(off + s <= 2048);
                prop_assert!(live.iter().all(|&(o, l)| off + s <= o || o + l <= off));
                live.push((off, s));
            }
        }
        prop_assert_eq!(t.allocated_bytes(), live.iter().map(|x| x.1).sum::<usize>());
    }
}

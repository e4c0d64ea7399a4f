use proptest::prelude::*;
use swt_harness::corpus::generate;
use swt_harness::replay::run;
use swt_harness::{package_name, Scenario, ScenarioInjection, Topology};

fn topology() -> impl Strategy<Value = Topology> {
    prop_oneof![Just(Topology::SingleLog), Just(Topology::DualLogQuorum), Just(Topology::CrossLogged)]
}

fn injection(n_releases: u64, packages: usize) -> impl Strategy<Value = ScenarioInjection> {
    let pkg = (0..packages).prop_map(package_name);
    let arch = prop_oneof![Just("amd64".to_string()), Just("arm64".to_string())];
    let r = 0..n_releases;
    prop_oneof![
        (r.clone(), pkg.clone()).prop_map(|(release, package)| ScenarioInjection::SkipSource { release, package }),
        (r.clone(), pkg.clone()).prop_map(|(release, package)| ScenarioInjection::DropSource { release, package }),
        (r.clone(), pkg.clone(), arch.clone())
            .prop_map(|(release, package, architecture)| ScenarioInjection::ForgeBinary { release, package, architecture }),
        (r.clone(), pkg.clone(), arch)
            .prop_map(|(release, package, architecture)| ScenarioInjection::RebuildWithoutBump { release, package, architecture }),
        (r.clone(), pkg.clone(), any::<bool>())
            .prop_map(|(release, package, forge_binary)| ScenarioInjection::HiddenVersion { release, package, forge_binary }),
        (r.clone(), pkg.clone()).prop_map(|(release, package)| ScenarioInjection::OutOfScopeUpload { release, package }),
        (r.clone(), pkg).prop_map(|(release, package)| ScenarioInjection::ExpiredKeyUpload { release, package }),
        r.prop_map(|release| ScenarioInjection::Equivocation { release }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn honest_histories_raise_nothing(seed in any::<u64>(), n in 1u64..6, packages in 1usize..6, churn in 0.0f64..1.0, topology in topology()) {
        let mut s = Scenario::honest(seed, n, packages, topology);
        s.churn = churn;
        s.payload_bytes = (64, 2048);
        let out = run(s).unwrap();
        prop_assert!(out.alerts.is_empty(), "{:#?}", out.alerts);
        prop_assert!(out.report.all_audits_ok());
        prop_assert!(out.report.roots_match());
    }

    #[test]
    fn injected_histories_match_ground_truth(
        seed in any::<u64>(),
        topology in topology(),
        injections in proptest::collection::vec(injection(6, 5), 1..4),
    ) {
        let mut s = Scenario::honest(seed, 6, 5, topology);
        s.payload_bytes = (64, 2048);
        s.injections = injections;
        prop_assume!(s.validate().is_ok());
        let out = run(s).unwrap();
        prop_assert!(out.report.comparison.exact, "{:#?}", out.report.comparison);
        prop_assert!(out.report.roots_match());
    }
}

proptest! {
    #[test]
    fn generation_is_deterministic(seed in any::<u64>(), n in 1u64..10, packages in 1usize..10) {
        let s = Scenario::honest(seed, n, packages, Topology::SingleLog);
        let a = generate(&s);
        let b = generate(&s);
        prop_assert_eq!(a.digest(), b.digest());
        prop_assert_eq!(a.releases.len() as u64, n);
        prop_assert!(a.expected.is_empty());
        // Every package appears in the first release, and versions only grow.
        prop_assert_eq!(a.releases[0].uploads.len(), packages);
        let mut last = std::collections::BTreeMap::new();
        for r in &a.releases {
            for u in &r.uploads {
                let v = swt_core::version::VersionString::parse(&u.version).unwrap();
                if let Some(prev) = last.insert(u.package.clone(), v.clone()) {
                    prop_assert!(prev < v);
                }
            }
        }
    }
}

#[test]
fn validation_rejects_impossible_injections() {
    let base = Scenario::honest(1, 4, 3, Topology::SingleLog);
    let bad = [
        ScenarioInjection::SkipSource { release: 4, package: "pkg000".into() },
        ScenarioInjection::SkipSource { release: 0, package: "pkg009".into() },
        ScenarioInjection::RebuildWithoutBump { release: 0, package: "pkg001".into(), architecture: "amd64".into() },
        ScenarioInjection::ForgeBinary { release: 1, package: "pkg001".into(), architecture: "riscv64".into() },
        ScenarioInjection::HiddenVersion { release: 3, package: "pkg001".into(), forge_binary: false },
        ScenarioInjection::OutOfScopeUpload { release: 1, package: "pkg000".into() },
        ScenarioInjection::Equivocation { release: 3 },
    ];
    for inj in bad {
        let mut s = base.clone();
        s.injections = vec![inj.clone()];
        assert!(s.validate().is_err(), "{inj:?}");
    }
    let mut s = base.clone();
    s.injections = vec![
        ScenarioInjection::HiddenVersion { release: 1, package: "pkg001".into(), forge_binary: false },
        ScenarioInjection::DropSource { release: 2, package: "pkg001".into() },
    ];
    assert!(s.validate().is_err());
    let mut s = base;
    s.injections = vec![
        ScenarioInjection::SkipSource { release: 1, package: "pkg001".into() },
        ScenarioInjection::DropSource { release: 1, package: "pkg001".into() },
    ];
    assert!(s.validate().is_err());
}

#[test]
fn scenario_files_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

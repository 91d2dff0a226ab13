use mmstab::analysis::certificate::{foster_certificate, CertificateOptions};
use mmstab::analysis::drift::{check_bounded_increments, verify_drift_condition, DriftOptions, Verdict};
use mmstab::analysis::io::{read_kernel, write_kernel};
use mmstab::analysis::kernel::ModulatedKernel;
use mmstab::analysis::markov::{averaged_kernel, total_variation};
use mmstab::analysis::sparse::CsrMatrix;
use mmstab::net::{build_truncated_kernel, ArrivalLaw, KernelBudget, Mode, NetworkConfig};

fn network_kernel(lambda_g: f64, law: ArrivalLaw) -> mmstab::net::TruncatedKernel {
    let cfg = NetworkConfig::new(1, 0.3, 0.5, lambda_g, Mode::Coordinator, false, law).unwrap();
    build_truncated_kernel(&cfg, 30, 200, KernelBudget::default()).unwrap()
}

fn certify(k: &mmstab::net::TruncatedKernel) -> Verdict {
    let u = check_bounded_increments(&k.kernel, 10.0).unwrap().u;
    foster_certificate(&k.kernel, &k.empty_red(), 2.0 * u + 0.1, &CertificateOptions::default())
        .unwrap()
        .verdict
}

#[test]
fn poisson_arrivals_certify_on_the_same_side() {
    assert_eq!(certify(&network_kernel(0.05, ArrivalLaw::Poisson)), Verdict::Pass);
    assert_eq!(certify(&network_kernel(0.3, ArrivalLaw::Poisson)), Verdict::Fail);
}

#[test]
fn exported_kernel_verifies_identically() {
    let k = network_kernel(0.05, ArrivalLaw::Bernoulli);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kernel.json");
    write_kernel(&path, &k.kernel).unwrap();
    let back = read_kernel(&path).unwrap();
    assert_eq!(back, k.kernel);
    let a = verify_drift_condition(&k.kernel, &DriftOptions::default()).unwrap();
    let b = verify_drift_condition(&back, &DriftOptions::default()).unwrap();
    assert_eq!(a.epsilon, b.epsilon);
    assert_eq!(a.verdict, Verdict::Pass);
}

// With i.i.d. X the Y-marginal is exactly the averaged chain.
#[test]
fn iid_environment_gives_averaged_marginal_exactly() {
    let pi = [0.2, 0.5, 0.3];
    let px = CsrMatrix::from_row_vecs(&[pi.to_vec(), pi.to_vec(), pi.to_vec()]);
    let ks = vec![
        CsrMatrix::from_dense(3, 3, &[0.1, 0.6, 0.3, 0.5, 0.5, 0.0, 0.2, 0.2, 0.6]),
        CsrMatrix::from_dense(3, 3, &[0.9, 0.1, 0.0, 0.3, 0.3, 0.4, 0.0, 0.7, 0.3]),
        CsrMatrix::from_dense(3, 3, &[0.4, 0.4, 0.2, 0.1, 0.8, 0.1, 0.6, 0.0, 0.4]),
    ];
    let kernel = ModulatedKernel::new(px, ks).unwrap();
    let avg = averaged_kernel(&kernel).unwrap();
    let mut joint = vec![0.0; 9];
    for (x, w) in pi.iter().enumerate() {
        joint[kernel.joint_index(x, 2)] = *w;
    }
    let mut y = vec![0.0, 0.0, 1.0];
    for _ in 0..25 {
        joint = kernel.push_joint(&joint);
        y = avg.vec_mul(&y);
        let marginal: Vec<f64> = (0..3).map(|j| (0..3).map(|x| joint[x * 3 + j]).sum()).collect();
        assert!(total_variation(&marginal, &y) < 1e-14);
    }
}

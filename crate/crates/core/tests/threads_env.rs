//! Kept in its own binary because it sets a process-wide variable.

use rsonerf::cli::{run_with, THREADS_ENV};

fn code(args: &[&str]) -> (i32, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let c = run_with(std::iter::once("rsonerf").chain(args.iter().copied()), &mut out, &mut err);
    (c, String::from_utf8(err).unwrap())
}

#[test]
fn thread_cap_is_validated_and_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    fn synth(out: &str) -> [&str; 11] {
        ["synth", "--out", out, "--views", "3", "--width", "12", "--height", "12", "--samples", "16"]
    }

    std::env::set_var(THREADS_ENV, "zero");
    let (c, err) = code(&synth(dir));
    assert_eq!(c, 2);
    assert!(err.contains(THREADS_ENV));

    let mut outputs = Vec::new();
    for n in ["1", "3"] {
        std::env::set_var(THREADS_ENV, n);
        let out = format!("{dir}/t{n}");
        assert_eq!(code(&synth(&out)).0, 0);
        outputs.push(std::fs::read(format!("{out}/images/r_001.png")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    std::env::remove_var(THREADS_ENV);
}

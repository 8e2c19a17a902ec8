//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fail.

use std::process::ExitCode;
use std::time::Instant;

use ctis_core::bench::{linear_fit, run_benchmark, BenchConfig};
use ctis_core::index_map::{embed_index, embed_into, extract_into};
use ctis_core::io::{
    decode_cube, decode_image, decode_kernels, decode_report, encode_cube, encode_image,
    encode_kernels, encode_report, read_bench_csv, write_bench_csv, BenchRow, BENCH_CSV_HEADER,
};
use ctis_core::oracle::OracleLimits;
use ctis_core::{
    avg_relative_pixel_error, backward, bf_backward, bf_forward, build_system_matrix, column_sums,
    forward, full_spectrum_backward, project, relative_error, synth_kernels, synth_scene, Backend,
    Datacube, EmSolver, Error, FpaImage, Init, KernelSet, ProjectorWorkspace, Real, SceneKind,
    SolveReport, SolverConfig, SpectralProjector, SpotSpec, Storage, SystemGeometry,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Random geometry with `n * w <= 10^4`.
fn random_geometry(rng: &mut ChaCha8Rng) -> SystemGeometry {
    loop {
        let a = rng.gen_range(1..=8);
        let alpha = rng.gen_range(1..=8);
        let gamma = a + rng.gen_range(0..=40);
        let xi = alpha + rng.gen_range(0..=40);
        let w = rng.gen_range(1..=6);
        if gamma * xi * w <= 10_000 {
            return SystemGeometry::new(a, alpha, gamma, xi, w).unwrap();
        }
    }
}

fn random_kernels(g: &SystemGeometry, rng: &mut ChaCha8Rng) -> KernelSet<f64> {
    KernelSet::from_flat(
        g,
        (0..g.n() * g.w())
            .map(|_| rng.gen_range(0.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn random_cube(g: &SystemGeometry, rng: &mut ChaCha8Rng) -> Datacube<f64> {
    Datacube::new(g, (0..g.m()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn random_image(g: &SystemGeometry, rng: &mut ChaCha8Rng) -> FpaImage<f64> {
    FpaImage::new(g, (0..g.n()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dense(kernels: &KernelSet<f64>) -> ctis_core::DenseSystemMatrix<f64> {
    build_system_matrix(kernels, Storage::Dense, OracleLimits::default()).unwrap()
}

fn desk() -> SystemGeometry {
    SystemGeometry::new(8, 6, 32, 24, 4).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let trials = 24;
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let ks = random_kernels(&g, &mut rng);
        let f = random_cube(&g, &mut rng);
        let spectral = forward(&ks, &f, &mut ProjectorWorkspace::new(&g)).unwrap();
        let brute = bf_forward(&dense(&ks), &f).unwrap();
        worst = worst.max(rel_l2(spectral.data(), brute.data()));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-10 && secs < 10.0,
        format!(
            "{trials} geometries, worst relative L2 {worst:.2e} (<= 1e-10), {secs:.2} s (< 10 s)"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut half, mut full, mut paths, mut residue) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let trials = 24;
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let ks = random_kernels(&g, &mut rng);
        let u = random_image(&g, &mut rng);
        let brute = bf_backward(&dense(&ks), &u).unwrap();
        let spectral = backward(&ks, &u, &mut ProjectorWorkspace::new(&g)).unwrap();
        let fs = full_spectrum_backward(&ks, &u).unwrap();
        half = half.max(rel_l2(spectral.data(), brute.data()));
        full = full.max(rel_l2(fs.cube.data(), brute.data()));
        paths = paths.max(rel_l2(spectral.data(), fs.cube.data()));
        residue = residue.max(fs.imaginary_residue);
    }
    outcome(
        half <= 1e-10 && full <= 1e-10 && paths <= 1e-10,
        format!(
            "{trials} geometries: half-spectrum vs dense {half:.2e}, full-spectrum vs dense {full:.2e}, \
             half vs full {paths:.2e} (all <= 1e-10); max imaginary residue {residue:.2e}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let trials = 120;
    for _ in 0..trials {
        let g = random_geometry(&mut rng);
        let ks = random_kernels(&g, &mut rng);
        let f = random_cube(&g, &mut rng);
        let u = random_image(&g, &mut rng);
        let mut ws = ProjectorWorkspace::new(&g);
        let hf = forward(&ks, &f, &mut ws).unwrap();
        let htu = backward(&ks, &u, &mut ws).unwrap();
        let gap = (dot(hf.data(), u.data()) - dot(f.data(), htu.data())).abs();
        worst = worst.max(gap / (norm(f.data()) * norm(u.data())));
    }
    outcome(
        worst <= 1e-9,
        format!("{trials} trials, worst |<Hf,u> - <f,H^T u>| / (|f||u|) = {worst:.2e} (<= 1e-9)"),
    )
}

/// `(I_w ⊗ E) f` with `E = [I_alpha ⊗ Q; 0]`, `Q = [I_a; 0]`, built as an
/// explicit 0/1 matrix through a Kronecker product.
fn dense_embed(g: &SystemGeometry, f: &[f64]) -> Vec<f64> {
    let kron = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let (yr, yc) = (y.len(), y[0].len());
        let mut out = vec![vec![0.0; x[0].len() * yc]; x.len() * yr];
        for (i, row) in x.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                for p in 0..yr {
                    for q in 0..yc {
                        out[i * yr + p][j * yc + q] = v * y[p][q];
                    }
                }
            }
        }
        out
    };
    let identity = |k: usize| -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect()
    };
    let mut q = identity(g.a());
    q.resize(g.gamma(), vec![0.0; g.a()]);
    let mut e = kron(&identity(g.alpha()), &q);
    e.resize(g.n(), vec![0.0; g.ell()]);
    let mut out = vec![0.0; g.n() * g.w()];
    for s in 0..g.w() {
        let block = &f[s * g.ell()..(s + 1) * g.ell()];
        for (i, row) in e.iter().enumerate() {
            out[s * g.n() + i] = dot(row, block);
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let mut geometries = Vec::new();
    for a in 1..=4 {
        for alpha in 1..=3 {
            for gamma in a..=a + 4 {
                for xi in alpha..=alpha + 3 {
                    for w in 1..=3 {
                        geometries.push(SystemGeometry::new(a, alpha, gamma, xi, w).unwrap());
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    while geometries.len() < 2200 {
        geometries.push(random_geometry(&mut rng));
    }
    let mut failures = Vec::new();
    for g in &geometries {
        let (n, w, m) = (g.n(), g.w(), g.m());
        let mut seen = vec![false; n * w];
        let mut injective = true;
        for j in 0..m {
            let i = embed_index(g, j);
            injective &= i < n * w && !std::mem::replace(&mut seen[i], true);
        }
        let f: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v = vec![0.0; n * w];
        embed_into(g, &f, &mut v);
        let mut back = vec![0.0; m];
        extract_into(g, &v, &mut back);
        let identity = back.iter().zip(&f).all(|(x, y)| x.to_bits() == y.to_bits());
        let mut ez = vec![0.0; m];
        extract_into(g, &z, &mut ez);
        let pairing = dot(&v, &z) == dot(&f, &ez);
        let dense_ok = dense_embed(g, &f) == v;
        if !(injective && identity && pairing && dense_ok) {
            failures.push(format!(
                "{g} (injective {injective}, identity {identity}, pairing {pairing}, dense {dense_ok})"
            ));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} geometries (exhaustive small grid + random, n*w <= 1e4): injectivity, \
             extract(embed) bit-exact, exact adjoint pairing, dense E agreement; {} failures {}",
            geometries.len(),
            failures.len(),
            failures.first().cloned().unwrap_or_default()
        ),
    )
}

fn criterion_5() -> Outcome {
    let g = desk();
    let ks = synth_kernels::<f64>(&g, &SpotSpec::fitted(&g), 5).unwrap();
    let h = column_sums(&ks).unwrap();
    let truth = synth_scene::<f64>(&g, &SceneKind::Random(55)).unwrap();
    let mut matrix = dense(&ks);
    let image = project(&mut matrix, &truth).unwrap();
    let eps = f64::default_epsilon();
    let mut wbh = SpectralProjector::new(&ks);
    let mut fast = EmSolver::new(&mut wbh, &image, &h, Init::Ones, eps).unwrap();
    let mut slow = EmSolver::new(&mut matrix, &image, &h, Init::Ones, eps).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        fast.step();
        slow.step();
        worst = worst.max(rel_l2(fast.current(), slow.current()));
    }
    let (a, b) = (fast.into_cube().unwrap(), slow.into_cube().unwrap());
    let pixel = avg_relative_pixel_error(&a, &b, 0.0).unwrap();
    outcome(
        worst <= 1e-6 && pixel.mean <= 1e-6,
        format!(
            "{g}, K=50: worst per-iteration relative difference {worst:.2e} (<= 1e-6), \
             final avg relative pixel error {:.2e} (<= 1e-6)",
            pixel.mean
        ),
    )
}

/// Criterion 6 setup in precision `T`; returns (relative_error, seconds).
fn end_to_end<T: Real>() -> (f64, f64) {
    let g = desk();
    let ks = synth_kernels::<T>(&g, &SpotSpec::fitted(&g), 6).unwrap();
    let truth = synth_scene::<T>(&g, &SceneKind::Constant(100.0)).unwrap();
    let start = Instant::now();
    let mut projector = SpectralProjector::new(&ks);
    let image = project(&mut projector, &truth).unwrap();
    let h = column_sums(&ks).unwrap();
    let cfg = SolverConfig {
        iterations: 25,
        init: Init::Ones,
        ..SolverConfig::default()
    };
    let report = ctis_core::em_solve(&mut projector, &image, &h, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    (relative_error(&report.cube, &truth).unwrap(), secs)
}

fn criterion_6() -> Outcome {
    let (err, secs) = end_to_end::<f64>();
    outcome(
        err <= 0.05 && secs < 60.0,
        format!("{}, constant 100, K=25, ones: relative error {err:.2e} (<= 0.05), {secs:.3} s (< 60 s)", desk()),
    )
}

fn per_iteration_seconds(ks: &KernelSet<f32>, backends: Vec<Backend>) -> Vec<(String, f64)> {
    let g = ks.geometry();
    let truth = synth_scene::<f32>(g, &SceneKind::Random(7)).unwrap();
    let image = project(&mut SpectralProjector::new(ks), &truth).unwrap();
    let k = 4;
    let cfg = BenchConfig {
        iterations: vec![k],
        backends,
        repeats: 5,
        ..BenchConfig::default()
    };
    run_benchmark(ks, &image, None, &cfg)
        .unwrap()
        .into_iter()
        .filter(|r| r.solver == "em-median")
        .map(|r| (r.backend, r.seconds / k as f64))
        .collect()
}

fn criterion_7() -> Outcome {
    let base = SystemGeometry::new(16, 16, 128, 128, 1).unwrap();
    let ws = [2usize, 4, 8, 16];
    let mut times = Vec::new();
    for &w in &ws {
        let g = base.with_bands(w).unwrap();
        let ks = synth_kernels::<f32>(&g, &SpotSpec::fitted(&g), 7).unwrap();
        times.push(per_iteration_seconds(&ks, vec![Backend::Wbh])[0].1);
    }
    let x: Vec<f64> = ws.iter().map(|&w| w as f64).collect();
    let fit = linear_fit(&x, &times);

    let mut versus = Vec::new();
    let mut faster = true;
    for (a, alpha) in [(16, 16), (20, 16), (32, 16)] {
        let g = SystemGeometry::new(a, alpha, 64, 64, 4).unwrap();
        let ks = synth_kernels::<f32>(&g, &SpotSpec::fitted(&g), 7).unwrap();
        let t = per_iteration_seconds(&ks, vec![Backend::Wbh, Backend::Bf]);
        faster &= t[0].1 < t[1].1;
        versus.push(format!(
            "ell={} wbh {:.2e}s bf {:.2e}s",
            g.ell(),
            t[0].1,
            t[1].1
        ));
    }
    let series: Vec<String> = ws
        .iter()
        .zip(&times)
        .map(|(w, t)| format!("w={w}:{t:.2e}s"))
        .collect();
    outcome(
        fit.r_squared >= 0.95 && faster,
        format!(
            "wbh per-iteration {} -> linear fit R^2 {:.4} (>= 0.95); {}",
            series.join(" "),
            fit.r_squared,
            versus.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let g = SystemGeometry::new(5, 4, 20, 18, 3).unwrap();
    let ks = synth_kernels::<f64>(&g, &SpotSpec::fitted(&g), 8).unwrap();
    let h = column_sums(&ks).unwrap();
    let eps = f64::default_epsilon();
    let mut notes = Vec::new();

    // Fixed point: with g = H f exactly, one step returns f, on both backends.
    let f = synth_scene::<f64>(&g, &SceneKind::Random(81)).unwrap();
    let mut projector = SpectralProjector::new(&ks);
    let image = project(&mut projector, &f).unwrap();
    let mut solver = EmSolver::new(&mut projector, &image, &h, Init::Ones, eps).unwrap();
    solver.restart_from(&f).unwrap();
    solver.step();
    let change = |x: &[f64]| {
        x.iter()
            .zip(f.data())
            .map(|(a, b)| (a - b).abs() / b)
            .fold(0.0f64, f64::max)
    };
    let wbh_gap = change(solver.current());
    let matrix = dense(&ks);
    let exact = bf_forward(&matrix, &f).unwrap();
    let bf_gap = change(
        ctis_core::bf_em_step(&matrix, &h, &f, &exact, eps)
            .unwrap()
            .data(),
    );
    let fixed_ok = wbh_gap <= 1e-12 && bf_gap <= 1e-12;
    notes.push(format!(
        "fixed point max rel change wbh {wbh_gap:.2e}, bf {bf_gap:.2e} (<= 1e-12)"
    ));

    // Nonnegativity over a noisy image, all iterates.
    let mut rng = ChaCha8Rng::seed_from_u64(82);
    let noisy = FpaImage::new(
        &g,
        image
            .data()
            .iter()
            .map(|&x| (x * rng.gen_range(0.5..1.5)).max(0.0))
            .collect(),
    )
    .unwrap();
    let mut p2 = SpectralProjector::new(&ks);
    let mut s2 = EmSolver::new(&mut p2, &noisy, &h, Init::Ones, eps).unwrap();
    let mut min = f64::INFINITY;
    for _ in 0..25 {
        s2.step();
        min = min.min(s2.current().iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let nonneg_ok = min >= 0.0;
    notes.push(format!("min over 25 iterates {min:.2e} (>= 0)"));

    // Zero image.
    let zero = FpaImage::zeros(&g);
    let mut p3 = SpectralProjector::new(&ks);
    let mut s3 = EmSolver::new(&mut p3, &zero, &h, Init::Ones, eps).unwrap();
    let mut zero_ok = true;
    for _ in 0..5 {
        s3.step();
        zero_ok &= s3.current().iter().all(|&x| x == 0.0);
    }
    notes.push(format!(
        "zero image -> zero cube from iteration 2: {zero_ok}"
    ));

    // Column sums: integer kernels make every summation order exact.
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let int_ks = KernelSet::<f64>::from_flat(
        &g,
        (0..g.n() * g.w())
            .map(|_| rng.gen_range(0..16) as f64)
            .collect(),
    )
    .unwrap();
    let int_h = column_sums(&int_ks).unwrap();
    let matrix = dense(&int_ks);
    let mut sums_ok = true;
    for j in 0..g.m() {
        let band_first = int_h.data()[(j / g.ell()) * g.ell()];
        sums_ok &= int_h.data()[j] == band_first && matrix.column_sum(j) == int_h.data()[j];
    }
    notes.push(format!(
        "h piecewise constant and equal to dense column sums: {sums_ok}"
    ));

    outcome(
        fixed_ok && nonneg_ok && zero_ok && sums_ok,
        notes.join("; "),
    )
}

fn criterion_9() -> Outcome {
    let (e64, _) = end_to_end::<f64>();
    let (e32, secs) = end_to_end::<f32>();
    outcome(
        e32.is_finite() && e32 <= 0.05,
        format!(
            "relative error f64 {e64:.2e}, f32 {e32:.2e}, degradation {:.2e} (report only; f32 run {secs:.3} s)",
            e32 - e64
        ),
    )
}

fn criterion_10() -> Outcome {
    let g = SystemGeometry::new(3, 2, 7, 5, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let cube = random_cube(&g, &mut rng);
    let image = FpaImage::new(&g, (0..g.n()).map(|_| rng.gen_range(0.0..9.0)).collect()).unwrap();
    let ks = random_kernels(&g, &mut rng);
    let report = SolveReport {
        cube: cube.cast::<f32>(),
        iteration_seconds: vec![0.1, 0.2],
        residuals: Some(vec![0.5, 0.25]),
        iterations: 2,
    };

    let blobs = [
        encode_cube(&cube),
        encode_cube(&cube.cast::<f32>()),
        encode_image(&image),
        encode_kernels(&ks),
        encode_report(&report),
    ];
    let round_trip = decode_cube::<f64>(&blobs[0])
        .map(|c| encode_cube(&c) == blobs[0])
        .unwrap_or(false)
        && decode_cube::<f32>(&blobs[1])
            .map(|c| encode_cube(&c) == blobs[1])
            .unwrap_or(false)
        && decode_image::<f64>(&blobs[2])
            .map(|c| encode_image(&c) == blobs[2])
            .unwrap_or(false)
        && decode_kernels::<f64>(&blobs[3])
            .map(|c| encode_kernels(&c) == blobs[3])
            .unwrap_or(false)
        && decode_report::<f32>(&blobs[4])
            .map(|r| r == report)
            .unwrap_or(false);

    // Flip every payload byte in turn.
    let bytes = &blobs[0];
    let payload_start = bytes.len() - g.m() * 8;
    let mut undetected = 0;
    for pos in payload_start..bytes.len() {
        let mut corrupt = bytes.clone();
        corrupt[pos] ^= 0x5a;
        if !matches!(decode_cube::<f64>(&corrupt), Err(Error::Checksum { .. })) {
            undetected += 1;
        }
    }
    let truncated = matches!(
        decode_cube::<f64>(&bytes[..bytes.len() - 3]),
        Err(Error::Checksum { .. })
    );

    let rows = vec![BenchRow {
        solver: "em".into(),
        backend: "wbh".into(),
        w: 2,
        iterations: 25,
        seconds: 0.5,
        relative_error: Some(0.01),
        avg_rel_pixel_error: Some(0.02),
    }];
    let mut csv = Vec::new();
    write_bench_csv(&mut csv, &rows).unwrap();
    let text = String::from_utf8(csv.clone()).unwrap();
    let schema = text.lines().next() == Some(&BENCH_CSV_HEADER.join(","))
        && text.lines().next()
            == Some("solver,backend,w,K,seconds,relative_error,avg_rel_pixel_error")
        && read_bench_csv(&csv[..]).map(|r| r == rows).unwrap_or(false);

    outcome(
        round_trip && undetected == 0 && truncated && schema,
        format!(
            "round trip bit-exact: {round_trip}; {} single-byte corruptions, {undetected} undetected; \
             truncation detected: {truncated}; CSV schema: {schema}",
            bytes.len() - payload_start
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence (forward)", criterion_1),
        ("oracle equivalence (backward + Hermitian)", criterion_2),
        ("adjointness", criterion_3),
        ("index-map suite", criterion_4),
        ("EM backend equivalence", criterion_5),
        ("end-to-end quality", criterion_6),
        ("complexity scaling", criterion_7),
        ("EM structural properties", criterion_8),
        ("precision study", criterion_9),
        ("persistence", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = run();
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} [{:>2}] {name}: {}",
            if result.pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

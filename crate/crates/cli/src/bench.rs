//! Benchmark harness: primitive micro-benchmarks and whole-procedure
//! timings over the loopback runner, reported as CSV.
//!
//! Methodology: every cell runs 5 untimed warmup iterations followed by
//! the measured iterations (30 by default); mean and standard deviation
//! are reported with no further outlier trimming. Absolute numbers are
//! host-specific; the suite exists for the ordinal relations (the
//! Shamir scheme outpaces GQ at equal modulus size, and the on-the-fly
//! procedure outpaces the asymmetric execute path).

use std::time::Instant;

use rand_chacha::ChaCha20Rng;

use vacs_core::crypto;
use vacs_core::groupsig::{self, GsBackend};
use vacs_core::ibs::{self, IbsScheme};
use vacs_core::policy::{Action, FACTORY_POLICY};
use vacs_core::protocol::{
    runner, ActionRequest, Cast, EngineCtx, OpCounters, SessionCipher, TokenKind, WorldConfig,
    OWNER_ROLE,
};
use vacs_core::wire::Timestamp;

pub const WARMUP_ITERATIONS: usize = 5;

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub device: String,
    pub suite: &'static str,
    pub item: String,
    pub operation: String,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# warmup: first {WARMUP_ITERATIONS} iterations dropped; no other outlier trimming\n"
        ));
        out.push_str(&format!("# seed: {}\n", self.seed));
        out.push_str("device,suite,item,operation,mean_ms,std_ms,iterations\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{}\n",
                row.device,
                row.suite,
                row.item,
                row.operation,
                row.mean_ms,
                row.std_ms,
                row.iterations
            ));
        }
        out
    }

    pub fn mean_of(&self, item: &str, operation: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.item == item && r.operation == operation)
            .map(|r| r.mean_ms)
    }
}

pub fn device_label() -> String {
    std::fs::read_to_string("/proc/sys/kernel/hostname")
        .map(|s| s.trim().to_string())
        .ok()
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "localhost".to_string())
}

/// Warm up, then time `iterations` runs of `op`.
fn time_cell(iterations: usize, mut op: impl FnMut()) -> (f64, f64) {
    for _ in 0..WARMUP_ITERATIONS {
        op();
    }
    let mut samples_ms = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        op();
        samples_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let mean = samples_ms.iter().sum::<f64>() / samples_ms.len() as f64;
    let var = samples_ms
        .iter()
        .map(|s| (s - mean) * (s - mean))
        .sum::<f64>()
        / samples_ms.len() as f64;
    (mean, var.sqrt())
}

fn seeded(seed: u64) -> ChaCha20Rng {
    use rand::SeedableRng;
    ChaCha20Rng::seed_from_u64(seed)
}

/// Primitive micro-benchmarks: group signatures on both backends,
/// both identity-based schemes at the test and default modulus sizes,
/// Diffie-Hellman at two group sizes, and the KEM.
pub fn bench_primitives(seed: u64, iterations: usize) -> BenchReport {
    let device = device_label();
    let mut rows = Vec::new();
    let mut rng = seeded(seed);
    let msg = b"benchmark message";

    for (backend, label) in [
        (GsBackend::Pairing, "gs-bls12-381"),
        (GsBackend::Reference, "gs-reference"),
    ] {
        let (gpk, _gmsk, members) = groupsig::gen(backend, 8, &mut rng).expect("gen");
        let member = &members[0];
        let (mean, std) = time_cell(iterations, || {
            std::hint::black_box(groupsig::sign(&gpk, member, msg, &mut rng));
        });
        rows.push(row(&device, "primitives", label, "sign", mean, std, iterations));
        let sig = groupsig::sign(&gpk, member, msg, &mut rng);
        let (mean, std) = time_cell(iterations, || {
            std::hint::black_box(groupsig::verify(&gpk, msg, &sig));
        });
        rows.push(row(&device, "primitives", label, "verify", mean, std, iterations));
    }

    for scheme in [IbsScheme::Shamir, IbsScheme::Gq] {
        for bits in [512u64, 2048] {
            let item = format!("{}-{bits}", scheme.name());
            let master = ibs::setup(scheme, bits, None, &mut rng).expect("setup");
            let key = ibs::keyder(&master, b"bench-user");
            let (mean, std) = time_cell(iterations, || {
                std::hint::black_box(ibs::sign(&key, msg, &mut rng));
            });
            rows.push(row(&device, "primitives", &item, "sign", mean, std, iterations));
            let sig = ibs::sign(&key, msg, &mut rng);
            let (mean, std) = time_cell(iterations, || {
                std::hint::black_box(ibs::verify(master.params(), b"bench-user", msg, &sig));
            });
            rows.push(row(&device, "primitives", &item, "verify", mean, std, iterations));
        }
    }

    for (group, label) in [
        (crypto::DhGroup::Modp2048, "dh-modp2048"),
        (crypto::DhGroup::Modp3072, "dh-modp3072"),
    ] {
        let (mean, std) = time_cell(iterations, || {
            std::hint::black_box(crypto::dh_keygen(group, &mut rng));
        });
        rows.push(row(&device, "primitives", label, "keygen", mean, std, iterations));
        let mine = crypto::dh_keygen(group, &mut rng);
        let peer = crypto::dh_keygen(group, &mut rng).point_bytes();
        let (mean, std) = time_cell(iterations, || {
            std::hint::black_box(crypto::dh_combine(&mine, &peer).expect("valid share"));
        });
        rows.push(row(&device, "primitives", label, "combine", mean, std, iterations));
    }

    let pair = crypto::kem_keygen(2048, &mut rng);
    let (mean, std) = time_cell(iterations, || {
        std::hint::black_box(crypto::kem_encapsulate(&pair.public, &mut rng));
    });
    rows.push(row(&device, "primitives", "kem-rsa2048", "encapsulate", mean, std, iterations));
    let (_, ct) = crypto::kem_encapsulate(&pair.public, &mut rng);
    let (mean, std) = time_cell(iterations, || {
        std::hint::black_box(crypto::kem_decapsulate(&pair.secret, &ct).expect("honest ct"));
    });
    rows.push(row(&device, "primitives", "kem-rsa2048", "decapsulate", mean, std, iterations));

    BenchReport { seed, rows }
}

/// Whole-procedure timings over the loopback runner at the 512-bit test
/// profile: both delegation kinds, execute for both delegation kinds
/// under both identity-based schemes, and the symmetric-only on-the-fly
/// execution.
pub fn bench_procedures(seed: u64, iterations: usize) -> BenchReport {
    let device = device_label();
    let mut rows = Vec::new();

    for scheme in [IbsScheme::Shamir, IbsScheme::Gq] {
        let config = WorldConfig {
            ibs_scheme: scheme,
            ibs_bits: 512,
            gs_backend: GsBackend::Reference,
            cipher: SessionCipher::Kem,
            group_capacity: (iterations + WARMUP_ITERATIONS + 4) as u32,
            ..WorldConfig::default()
        };
        let mut rng = seeded(seed);
        let mut cast = Cast::new(config, "1HGCM82633A004352", &mut rng);
        cast.add_user("bench");
        let mut ops = OpCounters::default();
        let now = Timestamp(1_700_000_000);
        let mut ctx = EngineCtx {
            rng: &mut rng,
            now,
            ops: &mut ops,
        };
        runner::run_setup(&mut cast, FACTORY_POLICY, &mut ctx).expect("setup");
        runner::run_set_root(&mut cast, now, &mut ctx).expect("set-root");
        runner::run_upload_gpk(&mut cast, OWNER_ROLE, &mut ctx).expect("upload owner");
        runner::run_upload_gpk(&mut cast, "Driver", &mut ctx).expect("upload driver");

        let window = (Timestamp(0), Timestamp::INFINITY);
        for (kind, label) in [
            (TokenKind::Persistent, "delegate-persistent"),
            (TokenKind::Ephemeral, "delegate-ephemeral"),
        ] {
            let (mean, std) = time_cell(iterations, || {
                runner::run_delegate(&mut cast, "bench", kind, "Driver", &[], window, &mut ctx)
                    .expect("delegate");
            });
            rows.push(row(&device, "procedures", label, scheme.name(), mean, std, iterations));
        }

        for (kind, label) in [
            (TokenKind::Persistent, "execute-persistent"),
            (TokenKind::Ephemeral, "execute-ephemeral"),
        ] {
            runner::run_delegate(&mut cast, "bench", kind, "Driver", &[], window, &mut ctx)
                .expect("delegate");
            let (mean, std) = time_cell(iterations, || {
                runner::run_execute(
                    &mut cast,
                    "bench",
                    ActionRequest::new("Open Doors", Action::Execute),
                    &[],
                    &mut ctx,
                )
                .expect("execute");
            });
            rows.push(row(&device, "procedures", label, scheme.name(), mean, std, iterations));
        }

        // one established session, then symmetric-only runs
        if scheme == IbsScheme::Shamir {
            runner::run_execute(
                &mut cast,
                "bench",
                ActionRequest::new("Open Doors", Action::Execute),
                &[],
                &mut ctx,
            )
            .expect("session");
            let (mean, std) = time_cell(iterations, || {
                runner::run_execute_otf(
                    &mut cast,
                    "bench",
                    ActionRequest::new("Open Doors", Action::Execute),
                    &mut ctx,
                )
                .expect("otf");
            });
            rows.push(row(&device, "procedures", "execute-otf", "symmetric", mean, std, iterations));
        }
    }

    BenchReport { seed, rows }
}

fn row(
    device: &str,
    suite: &'static str,
    item: &str,
    operation: &str,
    mean_ms: f64,
    std_ms: f64,
    iterations: usize,
) -> BenchRow {
    BenchRow {
        device: device.to_string(),
        suite,
        item: item.to_string(),
        operation: operation.to_string(),
        mean_ms,
        std_ms,
        iterations,
    }
}

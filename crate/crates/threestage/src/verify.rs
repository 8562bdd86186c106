//! Invariant suites behind `threestage verify`.

use rand::SeedableRng;
use serde::Serialize;
use threestage_core::adversary::{fixing_probe, probe_inner_product_check, ProbeStates, ProbeVerdict};
use threestage_core::bench::{
    bench_transmit_bit, plate_product, plates_are_identity, session_schedule, shutter_plan, validate_schedule,
    BenchConfig, BlockPlan, DetectorModel, DetectorOutcome, EventKind, Plate, TimingEvent, TimingLimits,
};
use threestage_core::groups::{commutes, commutes_up_to_phase, masking_probability, Commutation, FamilyKind};
use threestage_core::linalg::{random_state, random_unitary};
use threestage_core::polarization::{apply_mueller, half_wave_plate_mueller, JonesVector, MuellerMatrix, StokesVector};
use threestage_core::protocol::{
    alice_stage1, alice_stage3, bob_stage2, bob_stage4, run_session, BlockKey, ProtocolBit, SessionConfig, SessionMode,
};
use threestage_core::seed::SimRng;
use threestage_core::{Complex64, ALGEBRA_TOL, TRIG_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Eq1,
    Groups,
    Masking,
    Roundtrip,
    Probe,
    Timing,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [
        Suite::Eq1,
        Suite::Groups,
        Suite::Masking,
        Suite::Roundtrip,
        Suite::Probe,
        Suite::Timing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Eq1 => "eq1",
            Self::Groups => "groups",
            Self::Masking => "masking",
            Self::Roundtrip => "roundtrip",
            Self::Probe => "probe",
            Self::Timing => "timing",
            Self::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

struct Checks {
    suite: &'static str,
    out: Vec<Check>,
}

impl Checks {
    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.out.push(Check {
            suite: self.suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

/// Runs `suite` (or every suite for [`Suite::All`]) with randomness from `seed`.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<Check> {
    if suite == Suite::All {
        return Suite::EACH.into_iter().flat_map(|s| run_suite(s, seed)).collect();
    }
    let mut c = Checks {
        suite: suite.name(),
        out: Vec::new(),
    };
    let mut rng = SimRng::seed_from_u64(seed);
    match suite {
        Suite::Eq1 => eq1(&mut c),
        Suite::Groups => groups(&mut c, &mut rng),
        Suite::Masking => masking(&mut c),
        Suite::Roundtrip => roundtrip(&mut c, seed),
        Suite::Probe => probe(&mut c, &mut rng),
        Suite::Timing => timing(&mut c),
        Suite::All => unreachable!(),
    }
    c.out
}

fn eq1(c: &mut Checks) {
    let s = StokesVector::new(1.0, 1.0, 0.0, 0.0);
    let out = apply_mueller(&plate_product(30.0, 40.0), &s);
    let err = out.max_abs_diff(&s);
    c.push("x=30 y=40 returns S", err <= ALGEBRA_TOL, format!("max |O-S| = {err:.2e}"));

    let reading = bench_transmit_bit(
        ProtocolBit::Zero,
        &BenchConfig::with_angles(30.0, 40.0),
        &DetectorModel::ideal(),
        &mut SimRng::seed_from_u64(0),
    );
    let ok = matches!(&reading, Ok(r) if r.outcome == DetectorOutcome::Click(ProtocolBit::Zero)
        && r.output_stokes().max_abs_diff(&s) <= ALGEBRA_TOL);
    c.push("bench bit 0 at x=30 y=40 is horizontal", ok, "detector 0 clicks, output (1,1,0,0)");

    let mut worst = 0.0_f64;
    let mut failures = 0;
    for i in 0..24 {
        for j in 0..24 {
            let (x, y) = (15.0 * i as f64, 15.0 * j as f64);
            worst = worst.max(plate_product(x, y).max_abs_diff(&MuellerMatrix::identity()));
            failures += usize::from(!plates_are_identity(x, y));
        }
    }
    c.push(
        "24x24 grid, beam order",
        failures == 0,
        format!("{failures} failures, worst {worst:.2e}"),
    );

    let literal = half_wave_plate_mueller(30.0)
        * half_wave_plate_mueller(-30.0)
        * half_wave_plate_mueller(40.0)
        * half_wave_plate_mueller(-40.0);
    let lit_err = apply_mueller(&literal, &s).max_abs_diff(&s);
    c.push(
        "literal plate order is not the identity",
        lit_err > 1e-3,
        format!("max |O-S| = {lit_err:.3}"),
    );
}

fn groups(c: &mut Checks, rng: &mut SimRng) {
    for kind in FamilyKind::ALL {
        let elements: Vec<_> = match kind.elements() {
            Some(all) => all,
            None => (0..16).map(|_| kind.random_element(rng)).collect(),
        };
        let transforms: Vec<_> = elements.iter().map(|e| e.transform().expect("catalog element")).collect();
        let unitary = transforms.iter().all(|t| t.matrix().is_unitary(ALGEBRA_TOL));
        c.push(format!("{kind} unitary"), unitary, format!("{} elements", transforms.len()));

        let mut exact = true;
        let mut phases: Vec<Complex64> = Vec::new();
        let mut phase_ok = true;
        for a in &transforms {
            for b in &transforms {
                let tol = if kind == FamilyKind::Rotation { TRIG_TOL } else { ALGEBRA_TOL };
                exact &= commutes(a, b, tol).expect("same dimension");
                match commutes_up_to_phase(a, b, tol).expect("same dimension") {
                    Some(l) => {
                        if !phases.iter().any(|p| (p - l).norm() <= tol) {
                            phases.push(l);
                        }
                    }
                    None => phase_ok = false,
                }
            }
        }
        let observed = if exact {
            "exact"
        } else if phase_ok {
            "up to phase"
        } else {
            "no"
        };
        let lambdas_real = phases.iter().all(|l| l.im == 0.0 && l.re.abs() == 1.0);
        let passed = match kind.commutation() {
            Commutation::Exact => exact,
            Commutation::UpToPhase => !exact && phase_ok && lambdas_real,
        };
        let mut ls: Vec<String> = phases.iter().map(|l| format!("{:+}", l.re)).collect();
        ls.sort();
        c.push(
            format!("{kind} commutation"),
            passed,
            format!("expected {:?}, observed {observed}, lambda in {{{}}}", kind.commutation(), ls.join(",")),
        );
    }
}

fn masking(c: &mut Checks) {
    for basis in 0..2 {
        let p = masking_probability(FamilyKind::Pauli, basis).expect("qubit basis");
        c.push(format!("pauli flips |{basis}> with probability 1/2"), p == 0.5, format!("{p}"));
    }
    let r = masking_probability(FamilyKind::Rotation, 0).expect("qubit basis");
    c.push("uniform rotation flips |0> with probability 1/2", (r - 0.5).abs() <= ALGEBRA_TOL, format!("{r}"));
}

fn roundtrip(c: &mut Checks, seed: u64) {
    let detector = DetectorModel::ideal();
    let mut rng = SimRng::seed_from_u64(seed);
    for mode in [SessionMode::Rotation, SessionMode::HalfWavePlates] {
        let mut errors = 0;
        let mut runs = 0;
        for i in 0..72 {
            for j in 0..72 {
                let key = BlockKey::angles(0, 5.0 * i as f64, 5.0 * j as f64);
                for bit in [ProtocolBit::Zero, ProtocolBit::One] {
                    let m1 = alice_stage1(mode, bit, &key, 0, 1).expect("valid key");
                    let m2 = bob_stage2(mode, &m1, &key).expect("stage 2");
                    let m3 = alice_stage3(mode, &m2, &key).expect("stage 3");
                    let out = bob_stage4(mode, &m3, &key, &detector, &mut rng).expect("stage 4");
                    errors += usize::from(out != DetectorOutcome::Click(bit));
                    runs += 1;
                }
            }
        }
        c.push(format!("{mode} 5 deg grid"), errors == 0, format!("{errors} errors in {runs} runs"));
    }
    for kind in FamilyKind::ALL {
        let bits: Vec<ProtocolBit> = (0..64).map(|i| ProtocolBit::from_bool((i * 7 + i / 3) % 2 == 1)).collect();
        let t = run_session(&bits, &SessionConfig::with_mode(SessionMode::Family(kind)), seed);
        let ok = matches!(&t, Ok(t) if t.decoded_bits().as_deref() == Some(&bits[..]));
        c.push(format!("{kind} family session"), ok, "64 bits, block 8");
    }
}

fn probe(c: &mut Checks, rng: &mut SimRng) {
    let mut worst = 0.0_f64;
    let mut verdict_ok = true;
    for _ in 0..1000 {
        let u = random_unitary(4, rng);
        let states = ProbeStates {
            psi: JonesVector::try_from(&random_state(2, rng)).expect("qubit"),
            phi: JonesVector::try_from(&random_state(2, rng)).expect("qubit"),
            ancilla: random_state(2, rng),
        };
        match probe_inner_product_check(&u, &states) {
            Ok(r) => {
                worst = worst.max(r.deviation);
                verdict_ok &= r.verdict != ProbeVerdict::Violated;
            }
            Err(_) => verdict_ok = false,
        }
    }
    c.push(
        "1000 random probes preserve inner products",
        worst <= ALGEBRA_TOL && verdict_ok,
        format!("worst deviation {worst:.2e}"),
    );

    let mut worst = 0.0_f64;
    let mut learned_nothing = true;
    for _ in 0..200 {
        let ancilla = random_state(4, rng);
        let u = fixing_probe(&ancilla, rng).expect("normalized ancilla");
        let states = ProbeStates {
            psi: JonesVector::linear(rand::Rng::random::<f64>(rng) * 180.0),
            phi: JonesVector::linear(rand::Rng::random::<f64>(rng) * 180.0),
            ancilla,
        };
        match probe_inner_product_check(&u, &states) {
            Ok(r) => {
                let o = r.ancilla_overlap.unwrap_or(Complex64::new(0.0, 0.0));
                worst = worst.max((o - 1.0).norm());
                learned_nothing &= matches!(
                    r.verdict,
                    ProbeVerdict::NothingLearned | ProbeVerdict::OrthogonalDistinguishable
                );
            }
            Err(_) => learned_nothing = false,
        }
    }
    c.push(
        "probes fixing both states leave the ancilla unchanged",
        worst <= TRIG_TOL && learned_nothing,
        format!("worst |<v'|v''> - 1| = {worst:.2e}"),
    );

    let states = ProbeStates {
        psi: JonesVector::horizontal(),
        phi: JonesVector::vertical(),
        ancilla: random_state(2, rng),
    };
    let r = probe_inner_product_check(&random_unitary(4, rng), &states);
    c.push(
        "orthogonal states flagged distinguishable",
        matches!(r, Ok(r) if r.verdict == ProbeVerdict::OrthogonalDistinguishable),
        "",
    );
}

fn timing(c: &mut Checks) {
    let limits = TimingLimits::from(&BenchConfig::default());
    let alternating: Vec<ProtocolBit> = (0..80).map(|i| ProtocolBit::from_bool(i % 2 == 1)).collect();
    let zeros = vec![ProtocolBit::Zero; 4];

    fn named<T>(r: Result<T, threestage_core::bench::ConstraintViolation>) -> String {
        match r {
            Ok(_) => "accepted".to_owned(),
            Err(e) => e.constraint().to_owned(),
        }
    }
    let on = named(shutter_plan(&alternating, 5.0, &limits));
    c.push("5 ms slots rejected", on == "minimum on time", on);
    let rate = named(shutter_plan(&zeros, 20.0, &limits));
    c.push("repeated 20 ms openings rejected", rate == "maximum shutter rate", rate);
    let fast = [TimingEvent {
        kind: EventKind::RotatorMove {
            plate: Plate::Alice1,
            from: 0.0,
            to: 90.0,
        },
        t_start_ms: 0.0,
        t_end_ms: 1000.0,
    }];
    let vel = named(validate_schedule(&fast, &limits));
    c.push("90 deg in 1 s rejected", vel == "maximum rotation velocity", vel);

    match shutter_plan(&alternating, 40.0, &limits) {
        Ok(r) => c.push(
            "40 ms x 80 bits feasible",
            r.bits_per_second <= 25.0,
            format!("{} bits/s", r.bits_per_second),
        ),
        Err(e) => c.push("40 ms x 80 bits feasible", false, e.to_string()),
    }
    let blocks: Vec<BlockPlan> = (0..10)
        .map(|b| BlockPlan {
            x: 30.0 + b as f64,
            y: 40.0 - b as f64,
            bits: alternating[8 * b..8 * b + 8].to_vec(),
        })
        .collect();
    match session_schedule(&blocks, 40.0, &limits) {
        Ok(r) => c.push(
            "session with rekeying feasible",
            r.bits_per_second <= 25.0,
            format!("{:.3} bits/s", r.bits_per_second),
        ),
        Err(e) => c.push("session with rekeying feasible", false, e.to_string()),
    }
}

//! Codec and e-stop checks against the frozen packing-oracle vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strider_core::canlink::*;
use strider_core::model::{default_robot_spec, NUM_JOINTS};

pub fn ak10_9() -> CodecRanges {
    CodecRanges::with_limits(65.0, 48.0)
}

pub fn ak70_10() -> CodecRanges {
    CodecRanges::with_limits(50.0, 24.8)
}

pub fn bytes(hex: &str) -> [u8; 8] {
    let v: Vec<u8> = hex.split(' ').map(|b| u8::from_str_radix(b, 16).unwrap()).collect();
    v.try_into().unwrap()
}

pub fn cmd(v: [f64; 5]) -> MotorCommand {
    MotorCommand {
        position: v[0],
        velocity: v[1],
        kp: v[2],
        kd: v[3],
        torque: v[4],
    }
}

/// Frozen output of tests/oracles/can_pack.py (exact rational arithmetic).
pub fn golden_cases() -> Vec<(CodecRanges, [f64; 5], &'static str)> {
    vec![
        (ak10_9(), [0.0, 0.0, 250.0, 2.5, 0.0], "80 00 80 08 00 80 08 00"),
        (ak70_10(), [0.0, 0.0, 250.0, 2.5, 0.0], "80 00 80 08 00 80 08 00"),
        (ak10_9(), [-12.5, -65.0, 0.0, 0.0, -48.0], "00 00 00 00 00 00 00 00"),
        (ak70_10(), [12.5, 50.0, 500.0, 5.0, 24.8], "ff ff ff ff ff ff ff ff"),
        (ak10_9(), [0.6, -1.25, 200.0, 3.0, 7.5], "86 24 7d 86 66 99 99 3f"),
        (ak70_10(), [-0.3, 2.5, 40.0, 0.5, -3.2], "7c ed 86 61 48 19 a6 f7"),
        (ak70_10(), [20.0, -80.0, 600.0, -1.0, 30.0], "ff ff 00 0f ff 00 0f ff"),
    ]
}

/// Golden vectors whose encoding differs from the oracle.
pub fn golden_mismatches() -> Vec<[f64; 5]> {
    golden_cases()
        .into_iter()
        .filter(|(r, v, hex)| encode_command(&cmd(*v), r, 3).unwrap().data != bytes(hex))
        .map(|(_, v, _)| v)
        .collect()
}

/// Round-trips `n` uniform commands alternating between both motor ranges.
/// Returns (worst error as a fraction of half an LSB, re-encode mismatches).
pub fn round_trip(n: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCA4);
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    for k in 0..n {
        let r = if k % 2 == 0 { ak10_9() } else { ak70_10() };
        let u = |rng: &mut ChaCha8Rng, f: FieldRange| rng.gen_range(f.min..=f.max);
        let c = MotorCommand {
            position: u(&mut rng, r.position),
            velocity: u(&mut rng, r.velocity),
            kp: u(&mut rng, r.kp),
            kd: u(&mut rng, r.kd),
            torque: u(&mut rng, r.torque),
        };
        let frame = encode_command(&c, &r, 1).unwrap();
        let back = decode_command(&frame.data, &r).unwrap();
        let fields = [
            (c.position, back.position, r.position),
            (c.velocity, back.velocity, r.velocity),
            (c.kp, back.kp, r.kp),
            (c.kd, back.kd, r.kd),
            (c.torque, back.torque, r.torque),
        ];
        for (x, y, f) in fields {
            worst = worst.max((x - y).abs() / (0.5 * f.lsb()));
        }
        // decoded values sit on the lattice: re-encoding is bit-identical
        if encode_command(&back, &r, 1).unwrap() != frame {
            mismatches += 1;
        }
    }
    (worst, mismatches)
}

fn live_commands(rng: &mut ChaCha8Rng) -> [MotorCommand; NUM_JOINTS] {
    std::array::from_fn(|_| MotorCommand {
        position: rng.gen_range(-2.0..2.0),
        velocity: rng.gen_range(-5.0..5.0),
        kp: rng.gen_range(1.0..500.0),
        kd: rng.gen_range(0.1..5.0),
        torque: rng.gen_range(1.0..20.0) * if rng.gen() { 1.0 } else { -1.0 },
    })
}

#[derive(Debug, Default)]
pub struct EstopSweep {
    pub sequences: usize,
    /// Live-torque frames scheduled while not Running.
    pub live_frames: usize,
    /// Transitions out of Stopped other than Clear → Armed, or into
    /// Running other than Armed + Start, or relay state disagreeing with
    /// the mode.
    pub bad_transitions: usize,
}

/// Every event sequence up to length `depth` from every start state,
/// scheduling random live commands after each event.
pub fn estop_sweep(depth: u32) -> EstopSweep {
    let cfg = CanConfig::for_robot(&default_robot_spec()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut out = EstopSweep::default();
    for start in [EstopState::ARMED, EstopState::RUNNING, EstopState::STOPPED] {
        for d in 0..=depth {
            for code in 0..4usize.pow(d) {
                let mut s = start;
                let mut c = code;
                for _ in 0..d {
                    let e = EstopEvent::ALL[c % 4];
                    c /= 4;
                    let next = estop_transition(s, e);
                    let left_stop = s.mode == EstopMode::Stopped
                        && next.mode != EstopMode::Stopped
                        && (e != EstopEvent::Clear || next != EstopState::ARMED);
                    let entered_run = next.mode == EstopMode::Running
                        && s.mode != EstopMode::Running
                        && (s.mode, e) != (EstopMode::Armed, EstopEvent::Start);
                    if left_stop || entered_run || next.relay_closed != (next.mode == EstopMode::Running) {
                        out.bad_transitions += 1;
                    }
                    s = next;
                    let frames = schedule_bus(s, &live_commands(&mut rng), &cfg);
                    let all: Vec<_> = frames.iter().flatten().collect();
                    assert_eq!(all.len(), NUM_JOINTS);
                    if s.mode != EstopMode::Running {
                        out.live_frames += all.iter().enumerate().filter(|(k, f)| !is_zero_torque(f, &cfg.ranges[*k])).count();
                    }
                }
                out.sequences += 1;
            }
        }
    }
    out
}

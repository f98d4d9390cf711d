use rand::Rng;

use crate::walk::law::StepLaw;

/// A simulated trajectory `S_0, S_1, ..., S_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkPath {
    pub positions: Vec<i64>,
}

impl WalkPath {
    pub fn len_steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn start(&self) -> i64 {
        self.positions[0]
    }

    pub fn end(&self) -> i64 {
        *self.positions.last().unwrap()
    }

    /// Number of `k < n` with `S_k = v`, i.e. the local time `L_{n-1}` at `v`.
    pub fn local_time_at(&self, v: i64, n: usize) -> usize {
        self.positions[..n.min(self.positions.len())]
            .iter()
            .filter(|&&x| x == v)
            .count()
    }

    pub fn increments(&self) -> impl Iterator<Item = i64> + '_ {
        self.positions.windows(2).map(|w| w[1] - w[0])
    }
}

pub fn simulate_path<R: Rng + ?Sized>(law: &StepLaw, x0: i64, n: usize, rng: &mut R) -> WalkPath {
    let mut positions = Vec::with_capacity(n + 1);
    positions.push(x0);
    let mut x = x0;
    for _ in 0..n {
        x += law.sample(rng);
        positions.push(x);
    }
    WalkPath { positions }
}

/// Whether a start inside the target set counts as an immediate hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassageMode {
    /// `T = inf{n >= 0 : S_n in A}`.
    Hitting,
    /// `tau = inf{n >= 1 : S_n in A}`.
    Return,
}

/// One first-passage observation; `hit == false` means censored at the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassageSample {
    pub hit: bool,
    pub time: u64,
}

pub fn first_passage_time<R: Rng + ?Sized>(
    law: &StepLaw,
    x0: i64,
    targets: &[i64],
    cap: u64,
    mode: PassageMode,
    rng: &mut R,
) -> PassageSample {
    if mode == PassageMode::Hitting && targets.contains(&x0) {
        return PassageSample { hit: true, time: 0 };
    }
    let mut x = x0;
    for t in 1..=cap {
        x += law.sample(rng);
        if targets.contains(&x) {
            return PassageSample { hit: true, time: t };
        }
    }
    PassageSample {
        hit: false,
        time: cap,
    }
}

/// Independent first-passage samples into `targets`, censored at `cap`.
pub fn first_passage_samples<R: Rng + ?Sized>(
    law: &StepLaw,
    x0: i64,
    targets: &[i64],
    cap: u64,
    mode: PassageMode,
    n_samples: usize,
    rng: &mut R,
) -> Vec<PassageSample> {
    (0..n_samples)
        .map(|_| first_passage_time(law, x0, targets, cap, mode, rng))
        .collect()
}

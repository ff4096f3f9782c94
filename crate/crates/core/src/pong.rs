//! Three-walled ping-pong arena on a 1 ms clock.
//!
//! The arena spans `[-5, 5]` cm on both axes. The left side has no wall; a
//! racket of height 1.8 cm slides along it. A ball that reaches the left border
//! inside the racket bounces back and yields a reward, otherwise it yields a
//! punishment and is relaunched from the middle vertical line.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Half the arena side, cm.
pub const HALF_SIZE: f64 = 5.0;
/// Step length, seconds.
pub const DT: f64 = 0.001;
pub const RACKET_HALF_HEIGHT: f64 = 0.9;
pub const RACKET_LIMIT: f64 = HALF_SIZE - RACKET_HALF_HEIGHT;
pub const MIN_SPEED: f64 = 10.0;
pub const MAX_SPEED: f64 = 33.3;
/// Lower bound on `|vx|` at relaunch, cm/s.
pub const MIN_VX: f64 = 10.0;
/// Racket speed while moving, cm/s.
pub const RACKET_SPEED: f64 = 20.0;
/// Steps between racket action redraws.
pub const POLICY_PERIOD: u64 = 100;

/// Racket kinematics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RacketParams {
    /// cm/s while moving.
    pub speed: f64,
    /// Steps between action redraws.
    pub policy_period: u64,
}

impl Default for RacketParams {
    fn default() -> Self {
        Self {
            speed: RACKET_SPEED,
            policy_period: POLICY_PERIOD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldState {
    pub ball_x: f64,
    pub ball_y: f64,
    /// cm/s
    pub ball_vx: f64,
    pub ball_vy: f64,
    /// Racket center, cm.
    pub racket_y: f64,
    pub step: u64,
}

impl WorldState {
    pub fn speed(&self) -> f64 {
        self.ball_vx.hypot(self.ball_vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Hold,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Up, Action::Down, Action::Hold];

    fn direction(self) -> f64 {
        match self {
            Action::Up => 1.0,
            Action::Down => -1.0,
            Action::Hold => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Reward,
    Punishment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvEvent {
    pub kind: EventKind,
    pub step: u64,
}

/// Ball relaunch on the middle vertical line: `(y, vx, vy)`.
///
/// Speed is uniform on `[10, 33.3)`. The direction is uniform over the angles
/// that keep `|vx| >= 10`, which is what rejection sampling of a uniform angle
/// would produce, drawn directly so it always terminates.
pub fn reset_ball<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64, f64) {
    let y = loop {
        let y = rng.gen_range(-HALF_SIZE..HALF_SIZE);
        if y != -HALF_SIZE {
            break y;
        }
    };
    let speed = rng.gen_range(MIN_SPEED..MAX_SPEED);
    let max_angle = (MIN_VX / speed).min(1.0).acos();
    let angle = if max_angle > 0.0 {
        rng.gen_range(-max_angle..=max_angle)
    } else {
        0.0
    };
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let vx = (speed * angle.cos()).max(MIN_VX) * sign;
    let vy = speed * angle.sin();
    (y, vx, vy)
}

/// Advances the world by one step under `action`.
pub fn env_step<R: Rng + ?Sized>(state: &WorldState, action: Action, rng: &mut R) -> (WorldState, Option<EnvEvent>) {
    env_step_with(state, action, RACKET_SPEED, rng)
}

/// [`env_step`] with an explicit racket speed, cm/s.
pub fn env_step_with<R: Rng + ?Sized>(
    state: &WorldState,
    action: Action,
    racket_speed: f64,
    rng: &mut R,
) -> (WorldState, Option<EnvEvent>) {
    let mut s = *state;
    let step = s.step;
    s.step += 1;

    s.racket_y = (s.racket_y + action.direction() * racket_speed * DT).clamp(-RACKET_LIMIT, RACKET_LIMIT);

    s.ball_x += s.ball_vx * DT;
    s.ball_y += s.ball_vy * DT;

    if s.ball_y > HALF_SIZE {
        s.ball_y = 2.0 * HALF_SIZE - s.ball_y;
        s.ball_vy = -s.ball_vy;
    } else if s.ball_y < -HALF_SIZE {
        s.ball_y = -2.0 * HALF_SIZE - s.ball_y;
        s.ball_vy = -s.ball_vy;
    }
    if s.ball_x > HALF_SIZE {
        s.ball_x = 2.0 * HALF_SIZE - s.ball_x;
        s.ball_vx = -s.ball_vx;
    }

    let mut event = None;
    if s.ball_x <= -HALF_SIZE {
        if (s.ball_y - s.racket_y).abs() <= RACKET_HALF_HEIGHT {
            s.ball_x = -2.0 * HALF_SIZE - s.ball_x;
            s.ball_vx = -s.ball_vx;
            event = Some(EnvEvent {
                kind: EventKind::Reward,
                step,
            });
        } else {
            let (y, vx, vy) = reset_ball(rng);
            s.ball_x = 0.0;
            s.ball_y = y;
            s.ball_vx = vx;
            s.ball_vy = vy;
            event = Some(EnvEvent {
                kind: EventKind::Punishment,
                step,
            });
        }
    }
    (s, event)
}

/// Racket that picks Up, Down or Hold uniformly at random and keeps it for
/// [`POLICY_PERIOD`] steps.
#[derive(Debug, Clone)]
pub struct ChaoticPolicy {
    current: Action,
    period: u64,
}

impl Default for ChaoticPolicy {
    fn default() -> Self {
        Self::with_period(POLICY_PERIOD)
    }
}

impl ChaoticPolicy {
    pub fn with_period(period: u64) -> Self {
        assert!(period > 0, "policy period must be positive");
        Self {
            current: Action::Hold,
            period,
        }
    }

    pub fn action<R: Rng + ?Sized>(&mut self, rng: &mut R, step: u64) -> Action {
        if step.is_multiple_of(self.period) {
            self.current = Action::ALL[rng.gen_range(0..3)];
        }
        self.current
    }
}

/// Seeded arena plus racket policy, with independent random streams for ball
/// relaunches and racket actions.
#[derive(Debug, Clone)]
pub struct PongEnv {
    state: WorldState,
    ball_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    policy: ChaoticPolicy,
    racket: RacketParams,
}

impl PongEnv {
    pub fn new(seed: u64) -> Self {
        Self::with_racket(seed, RacketParams::default())
    }

    pub fn with_racket(seed: u64, racket: RacketParams) -> Self {
        let mut ball_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
        policy_rng.set_stream(1);
        let (y, vx, vy) = reset_ball(&mut ball_rng);
        Self {
            state: WorldState {
                ball_x: 0.0,
                ball_y: y,
                ball_vx: vx,
                ball_vy: vy,
                racket_y: 0.0,
                step: 0,
            },
            ball_rng,
            policy_rng,
            policy: ChaoticPolicy::with_period(racket.policy_period),
            racket,
        }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn step(&mut self) -> Option<EnvEvent> {
        let action = self.policy.action(&mut self.policy_rng, self.state.step);
        let (next, event) = env_step_with(&self.state, action, self.racket.speed, &mut self.ball_rng);
        self.state = next;
        event
    }
}

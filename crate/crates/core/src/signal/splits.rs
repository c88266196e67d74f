//! Cross-validation split construction and hygiene checks.
//!
//! Splits are decided at the session level, never the window level, so that
//! overlapping windows from one recording can never straddle a train/test
//! boundary.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::window::WindowedDataset;
use crate::util::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitScheme {
    /// One fold per within-user session rank: fold k holds out every user's
    /// k-th session.
    LeaveOneSessionOut,
    /// One fold per user: the fold holds out all of that user's sessions.
    LeaveOneUserOut,
}

impl SplitScheme {
    pub fn parse(s: &str) -> Result<SplitScheme> {
        match s {
            "loso" => Ok(SplitScheme::LeaveOneSessionOut),
            "louo" => Ok(SplitScheme::LeaveOneUserOut),
            other => Err(Error::Config(format!(
                "unknown split scheme `{other}` (expected `loso` or `louo`)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SplitScheme::LeaveOneSessionOut => "loso",
            SplitScheme::LeaveOneUserOut => "louo",
        }
    }
}

/// One fold: disjoint sets of session indices into `WindowedDataset::sessions`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train_sessions: Vec<usize>,
    pub test_sessions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub folds: Vec<Fold>,
}

/// Groups session indices by user id (sorted), each user's sessions sorted
/// by session id.
fn sessions_by_user(ds: &WindowedDataset) -> BTreeMap<&str, Vec<usize>> {
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in ds.sessions.iter().enumerate() {
        by_user.entry(&s.user_id).or_default().push(i);
    }
    for list in by_user.values_mut() {
        list.sort_by(|&a, &b| ds.sessions[a].session_id.cmp(&ds.sessions[b].session_id));
    }
    by_user
}

pub fn build_splits(ds: &WindowedDataset, scheme: SplitScheme) -> Result<SplitPlan> {
    let by_user = sessions_by_user(ds);
    if ds.sessions.is_empty() {
        return Err(Error::Split("dataset contains no sessions".into()));
    }
    let folds = match scheme {
        SplitScheme::LeaveOneSessionOut => {
            let ranks = by_user.values().map(|v| v.len()).max().unwrap_or(0);
            if ranks < 2 {
                return Err(Error::Split(format!(
                    "leave-one-session-out needs at least 2 sessions per user, found {ranks}"
                )));
            }
            (0..ranks)
                .map(|k| {
                    let mut test = Vec::new();
                    let mut train = Vec::new();
                    for list in by_user.values() {
                        for (rank, &idx) in list.iter().enumerate() {
                            if rank == k {
                                test.push(idx);
                            } else {
                                train.push(idx);
                            }
                        }
                    }
                    train.sort_unstable();
                    test.sort_unstable();
                    Fold {
                        train_sessions: train,
                        test_sessions: test,
                    }
                })
                .collect()
        }
        SplitScheme::LeaveOneUserOut => {
            if by_user.len() < 2 {
                return Err(Error::Split(format!(
                    "leave-one-user-out needs at least 2 users, found {}",
                    by_user.len()
                )));
            }
            by_user
                .values()
                .map(|held_out| {
                    let mut test = held_out.clone();
                    let mut train: Vec<usize> = by_user
                        .values()
                        .flatten()
                        .copied()
                        .filter(|i| !held_out.contains(i))
                        .collect();
                    train.sort_unstable();
                    test.sort_unstable();
                    Fold {
                        train_sessions: train,
                        test_sessions: test,
                    }
                })
                .collect()
        }
    };
    Ok(SplitPlan { scheme, folds })
}

/// Window indices belonging to a session set, in dataset order.
pub fn windows_of_sessions(ds: &WindowedDataset, sessions: &[usize]) -> Vec<usize> {
    let mut member = vec![false; ds.sessions.len()];
    for &s in sessions {
        member[s] = true;
    }
    (0..ds.n_windows())
        .filter(|&w| member[ds.window_session[w] as usize])
        .collect()
}

/// Carves a stratified validation subset out of `train_windows`: per class,
/// a seeded shuffle sets aside `frac` of the windows (at least one when the
/// class has two or more). Returns (train, validation), both sorted.
pub fn carve_validation(
    ds: &WindowedDataset,
    train_windows: &[usize],
    frac: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for &w in train_windows {
        by_class.entry(ds.labels[w]).or_default().push(w);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "val-carve"));
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let n_val = if members.len() < 2 {
            0
        } else {
            ((members.len() as f64 * frac).round() as usize).max(1)
        };
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Verifies the plan: within each fold the session sets are disjoint and
/// cover the dataset, and across folds every unit is held out exactly once.
pub fn verify_split_hygiene(ds: &WindowedDataset, plan: &SplitPlan) -> Result<()> {
    let n = ds.sessions.len();
    let mut held_out_count = vec![0usize; n];
    for (f, fold) in plan.folds.iter().enumerate() {
        let mut seen = vec![0u8; n];
        for &s in &fold.train_sessions {
            seen[s] += 1;
        }
        for &s in &fold.test_sessions {
            seen[s] += 2;
            held_out_count[s] += 1;
        }
        for (s, &mark) in seen.iter().enumerate() {
            match mark {
                1 | 2 => {}
                0 => {
                    return Err(Error::Split(format!(
                        "fold {f}: session {s} is in neither train nor test"
                    )))
                }
                _ => {
                    return Err(Error::Split(format!(
                        "fold {f}: session {s} appears in both train and test"
                    )))
                }
            }
        }
        if let SplitScheme::LeaveOneUserOut = plan.scheme {
            let test_users: std::collections::BTreeSet<&str> = fold
                .test_sessions
                .iter()
                .map(|&s| ds.sessions[s].user_id.as_str())
                .collect();
            for &s in &fold.train_sessions {
                if test_users.contains(ds.sessions[s].user_id.as_str()) {
                    return Err(Error::Split(format!(
                        "fold {f}: user {} has sessions on both sides",
                        ds.sessions[s].user_id
                    )));
                }
            }
        }
    }
    match plan.scheme {
        SplitScheme::LeaveOneSessionOut => {
            for (s, &c) in held_out_count.iter().enumerate() {
                if c != 1 {
                    return Err(Error::Split(format!(
                        "session {s} held out {c} times, expected exactly once"
                    )));
                }
            }
        }
        SplitScheme::LeaveOneUserOut => {
            for (s, &c) in held_out_count.iter().enumerate() {
                if c != 1 {
                    return Err(Error::Split(format!(
                        "session {s} held out {c} times, expected exactly once"
                    )));
                }
            }
        }
    }
    Ok(())
}

use crate::error::Result;

use super::{EncDialogue, Speaker};

/// Preceding turns visible when processing turn `current`, as 1-based turn
/// numbers in dialogue order. The speaker views partition the full view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextBundle {
    pub current: usize,
    pub window: usize,
    pub full: Vec<usize>,
    pub s1: Vec<usize>,
    pub s2: Vec<usize>,
}

impl ContextBundle {
    pub fn speaker(&self, s: Speaker) -> &[usize] {
        match s {
            Speaker::S1 => &self.s1,
            Speaker::S2 => &self.s2,
        }
    }
}

/// The last `min(window, u - 1)` turns before turn `u`.
pub fn build_context(d: &EncDialogue, u: usize, window: usize) -> Result<ContextBundle> {
    d.turn(u)?;
    let start = u.saturating_sub(window).max(1);
    let full: Vec<usize> = (start..u).collect();
    let (s1, s2) = full
        .iter()
        .partition(|&&t| d.turns[t - 1].speaker == Speaker::S1);
    Ok(ContextBundle {
        current: u,
        window,
        full,
        s1,
        s2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{EncUtt, Lang};
    use crate::Error;
    use proptest::prelude::*;

    fn dialogue(n: usize) -> EncDialogue {
        EncDialogue {
            id: "d".into(),
            lang: Lang::Source,
            turns: (1..=n)
                .map(|t| EncUtt {
                    ids: vec![t as u32 + 10],
                    speaker: Speaker::for_turn(t),
                    turn: t,
                })
                .collect(),
        }
    }

    #[test]
    fn first_turn_has_empty_context() {
        let c = build_context(&dialogue(4), 1, 3).unwrap();
        assert!(c.full.is_empty() && c.s1.is_empty() && c.s2.is_empty());
    }

    #[test]
    fn fifth_turn_window_three() {
        let c = build_context(&dialogue(6), 5, 3).unwrap();
        assert_eq!(c.full, vec![2, 3, 4]);
        assert_eq!(c.s1, vec![3]);
        assert_eq!(c.s2, vec![2, 4]);
    }

    #[test]
    fn unbounded_window_gives_whole_speaker_histories() {
        let c = build_context(&dialogue(6), 5, usize::MAX).unwrap();
        assert_eq!(c.s1, vec![1, 3]);
        assert_eq!(c.s2, vec![2, 4]);
        assert!(build_context(&dialogue(6), 5, 0).unwrap().full.is_empty());
    }

    #[test]
    fn out_of_range_turn_is_an_error() {
        let d = dialogue(3);
        assert!(matches!(build_context(&d, 4, 3), Err(Error::TurnOutOfRange { turn: 4, .. })));
        assert!(build_context(&d, 0, 3).is_err());
    }

    proptest! {
        #[test]
        fn speakers_partition_the_window(n in 1usize..30, w in 0usize..8, pick in 0usize..1000) {
            let d = dialogue(n);
            let u = pick % n + 1;
            let c = build_context(&d, u, w).unwrap();
            prop_assert_eq!(c.full.len(), w.min(u - 1));
            prop_assert!(c.full.iter().all(|&t| t < u));
            let mut merged: Vec<usize> = c.s1.iter().chain(&c.s2).copied().collect();
            merged.sort_unstable();
            prop_assert_eq!(&merged, &c.full);
            prop_assert!(c.s1.iter().all(|t| t % 2 == 1));
            prop_assert!(c.s2.iter().all(|t| t % 2 == 0));
        }
    }
}

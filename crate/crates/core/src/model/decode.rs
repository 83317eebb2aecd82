//! Time-synchronous greedy transducer search.

use super::{PredictorState, RnntModel};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_MAX_SYMBOLS_PER_FRAME: usize = 4;

/// Anything that can score one lattice cell given a label-history state.
pub trait TransducerScorer {
    type State: Clone;

    fn num_frames(&self) -> usize;
    fn blank(&self) -> usize;
    fn start(&self) -> Result<Self::State>;
    /// Scores over the vocabulary at frame `t`; argmax is taken directly.
    fn scores(&self, t: usize, state: &Self::State) -> Result<Vec<f64>>;
    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State>;
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    best
}

/// Blank advances the frame; any other symbol is emitted and fed to the
/// label history, at most `max_symbols_per_frame` times per frame.
pub fn greedy_decode_with<S: TransducerScorer>(scorer: &S, max_symbols_per_frame: usize) -> Result<Vec<usize>> {
    if max_symbols_per_frame == 0 {
        return Err(Error::contract("max_symbols_per_frame must be at least 1"));
    }
    let mut state = scorer.start()?;
    let mut out = Vec::new();
    for t in 0..scorer.num_frames() {
        let mut emitted = 0;
        while emitted < max_symbols_per_frame {
            let k = argmax(&scorer.scores(t, &state)?);
            if k == scorer.blank() {
                break;
            }
            out.push(k);
            state = scorer.advance(&state, k)?;
            emitted += 1;
        }
    }
    Ok(out)
}

pub(super) struct ModelScorer<'a> {
    model: &'a RnntModel,
    encoded: Tensor,
}

impl<'a> ModelScorer<'a> {
    pub(super) fn new(model: &'a RnntModel, features: &Tensor) -> Result<Self> {
        Ok(ModelScorer {
            model,
            encoded: model.encode(features)?,
        })
    }
}

impl TransducerScorer for ModelScorer<'_> {
    type State = PredictorState;

    fn num_frames(&self) -> usize {
        self.encoded.shape()[0]
    }

    fn blank(&self) -> usize {
        self.model.config.blank_id
    }

    fn start(&self) -> Result<PredictorState> {
        self.model.predictor_start()
    }

    fn scores(&self, t: usize, state: &PredictorState) -> Result<Vec<f64>> {
        self.model.joint(self.encoded.row(t), state.output())
    }

    fn advance(&self, state: &PredictorState, token: usize) -> Result<PredictorState> {
        self.model.predictor_advance(state, token)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores come from a table indexed by (frame, number of labels emitted).
    struct TableScorer {
        table: Vec<Vec<usize>>,
        vocab: usize,
    }

    impl TransducerScorer for TableScorer {
        type State = usize;

        fn num_frames(&self) -> usize {
            self.table.len()
        }
        fn blank(&self) -> usize {
            0
        }
        fn start(&self) -> Result<usize> {
            Ok(0)
        }
        fn scores(&self, t: usize, u: &usize) -> Result<Vec<f64>> {
            let winner = self.table[t].get(*u).copied().unwrap_or(0);
            let mut s = vec![0.0; self.vocab];
            s[winner] = 1.0;
            Ok(s)
        }
        fn advance(&self, u: &usize, _token: usize) -> Result<usize> {
            Ok(u + 1)
        }
    }

    #[test]
    fn three_frame_hand_trace() {
        // frame 0: u=0 → 2, u=1 → blank
        // frame 1: u=1 → blank
        // frame 2: u=1 → 3, u=2 → 1, u=3 → blank
        let scorer = TableScorer {
            table: vec![vec![2, 0], vec![0, 0], vec![0, 3, 1, 0]],
            vocab: 4,
        };
        assert_eq!(greedy_decode_with(&scorer, 4).unwrap(), vec![2, 3, 1]);
        // capping emissions per frame truncates frame 2 after one symbol
        assert_eq!(greedy_decode_with(&scorer, 1).unwrap(), vec![2, 3]);
    }

    #[test]
    fn emission_cap_bounds_length() {
        let scorer = TableScorer {
            table: vec![vec![1; 10]; 3],
            vocab: 2,
        };
        let out = greedy_decode_with(&scorer, 2).unwrap();
        assert_eq!(out.len(), 6);
        assert!(greedy_decode_with(&scorer, 0).is_err());
    }
}

use crate::model::retain_parallel;
use crate::render::RenderOutput;

/// Per-primitive blending weight `Σ α·T`, accumulated over the views rendered
/// since the last resample.
///
/// A row's score is its mean weight per view in which it was rendered. Rows
/// left out of every render in a window (cached rows) keep the score from the
/// last window in which they trained.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportanceState {
    pub blend_weight_accum: Vec<f64>,
    /// Per row, renders in the current window that included it.
    pub views: Vec<u32>,
    /// Per row, the score carried over from earlier windows.
    pub score: Vec<f64>,
    pub window: usize,
}

impl ImportanceState {
    pub fn new(n: usize) -> Self {
        Self { blend_weight_accum: vec![0.0; n], views: vec![0; n], score: vec![0.0; n], window: 0 }
    }

    pub fn len(&self) -> usize {
        self.blend_weight_accum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blend_weight_accum.is_empty()
    }

    pub fn accumulate(&mut self, output: &RenderOutput) {
        self.accumulate_masked(output, None);
    }

    /// Adds one render; `mask` names the rows that took part in it.
    pub fn accumulate_masked(&mut self, output: &RenderOutput, mask: Option<&[bool]>) {
        assert_eq!(output.blend_weights.len(), self.len(), "importance state must be parallel to the set");
        for i in 0..self.len() {
            if mask.is_none_or(|m| m[i]) {
                self.blend_weight_accum[i] += output.blend_weights[i];
                self.views[i] += 1;
            }
        }
        self.window += 1;
    }

    /// Current per-row scores.
    pub fn scores(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| match self.views[i] {
                0 => self.score[i],
                v => self.blend_weight_accum[i] / v as f64,
            })
            .collect()
    }

    /// Closes the window: rendered rows take their new score, the rest keep theirs.
    pub fn reset(&mut self) {
        self.score = self.scores();
        self.blend_weight_accum.iter_mut().for_each(|a| *a = 0.0);
        self.views.iter_mut().for_each(|v| *v = 0);
        self.window = 0;
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        retain_parallel(&mut self.blend_weight_accum, keep);
        retain_parallel(&mut self.views, keep);
        retain_parallel(&mut self.score, keep);
    }

    pub fn grow(&mut self, n: usize) {
        let len = self.len() + n;
        self.blend_weight_accum.resize(len, 0.0);
        self.views.resize(len, 0);
        self.score.resize(len, 0.0);
    }
}

use std::fmt::Write as _;

use crate::bounds::inputs::BoundInputs;
use crate::bounds::offline::{OfflineBound, SimilarityStats};
use crate::bounds::adaptation::AdaptationBound;
use crate::bounds::stationary::StationaryAnalysis;
use crate::error::{Error, Result};

/// Every evaluated bound quantity with the inputs it was computed from.
///
/// Sections that could not be evaluated (for example because a precondition
/// failed) are `None` and serialize as `unavailable`, with the reason recorded
/// in `notes`.
#[derive(Clone, Debug, Default)]
pub struct BoundReport {
    pub inputs: Option<BoundInputs>,
    pub d_lambda: Option<f64>,
    pub d_lambda_lhs: Option<f64>,
    pub eig_lower_bound: Option<f64>,
    pub similarity: Option<SimilarityStats>,
    pub offline: Option<OfflineBound>,
    pub stationary: Option<StationaryAnalysis>,
    pub adaptation_literal: Option<AdaptationBound>,
    pub adaptation_restricted: Option<AdaptationBound>,
    /// Additional measured values, such as Monte-Carlo frequencies.
    pub extra: Vec<(String, f64)>,
    pub notes: Vec<String>,
}

/// Shortest text that parses back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

struct Kv(String);

impl Kv {
    fn num(&mut self, key: &str, v: f64) {
        let _ = writeln!(self.0, "{key} = {}", format_f64(v));
    }

    fn opt(&mut self, key: &str, v: Option<f64>) {
        match v {
            Some(v) => self.num(key, v),
            None => self.text(key, "unavailable"),
        }
    }

    fn text(&mut self, key: &str, v: &str) {
        let _ = writeln!(self.0, "{key} = {v}");
    }
}

impl BoundReport {
    /// Flat `name = value` document, one entry per line, in a fixed order.
    pub fn to_kv(&self) -> String {
        let mut kv = Kv(String::new());
        match &self.inputs {
            Some(i) => {
                kv.num("input.D", i.blocks as f64);
                kv.num("input.L", i.horizon as f64);
                kv.num("input.M", i.train_len as f64);
                kv.num("input.k", i.k as f64);
                kv.num("input.p", i.p);
                kv.num("input.delta", i.delta);
                kv.num("input.alpha", i.alpha);
                kv.num("input.sigma_a2", i.noise.sigma_a2);
                kv.num("input.sigma_w2", i.noise.sigma_w2);
                kv.num("input.n", i.n as f64);
                kv.num("input.m", i.m as f64);
                kv.num("input.gamma_half_max", i.gamma_half_max);
                kv.num("input.gamma_half_min", i.gamma_half_min);
                kv.num("input.gamma_last_max", i.gamma_last_max);
                kv.num("input.gamma_last_trace", i.gamma_last_trace);
                kv.num("input.b_norm", i.b_norm);
                kv.num("input.state_var_max", i.state_var_max);
                kv.num("input.state_cov_norm", i.state_cov_norm);
            }
            None => kv.text("input", "unavailable"),
        }
        kv.opt("d_lambda", self.d_lambda);
        kv.opt("d_lambda_lhs", self.d_lambda_lhs);
        if let (Some(need), Some(have)) = (self.d_lambda, self.d_lambda_lhs) {
            kv.text("d_lambda_satisfied", if have >= need { "true" } else { "false" });
        }
        kv.opt("eig_lower_bound", self.eig_lower_bound);
        kv.opt("eta", self.similarity.as_ref().map(|s| s.eta));
        kv.opt("v_phi", self.similarity.as_ref().map(|s| s.v_phi));
        let off = self.offline.as_ref();
        kv.opt("bar_lambda", off.map(|o| o.bar_lambda));
        kv.opt("big_lambda", off.map(|o| o.big_lambda));
        kv.opt("c_v", off.map(|o| o.c_v));
        kv.opt("c_0", off.map(|o| o.c_0));
        kv.opt("c_q", off.map(|o| o.c_q));
        kv.opt("h_w", off.map(|o| o.h_w));
        kv.opt("c_w", off.map(|o| o.c_w));
        kv.opt("gamma_te_max", off.map(|o| o.gamma_te_max));
        kv.opt("h_0", off.map(|o| o.h_0));
        kv.opt("lambda_min_zz", off.map(|o| o.lambda_min_zz));
        kv.opt("similarity_term", off.map(|o| o.similarity_term));
        kv.opt("gap_bound", off.map(|o| o.gap_bound));
        let st = self.stationary.as_ref();
        kv.opt("rho", st.map(|s| s.rho));
        kv.opt("closed_loop_radius", st.map(|s| s.closed_loop_radius));
        kv.opt("p_inf_trace", st.map(|s| s.p_inf.trace()));
        kv.opt("p_hat_inf_min_eig", st.map(|s| s.min_eig_full));
        kv.opt("p_hat_inf_min_eig_restricted", st.map(|s| s.min_eig_restricted));
        if let Some(s) = st {
            kv.text("p_hat_inf_degenerate", if s.min_eig_full <= 0.0 { "true" } else { "false" });
        }
        kv.opt("c_m", st.map(|s| s.c_m));
        for (tag, p) in [("literal", &self.adaptation_literal), ("restricted", &self.adaptation_restricted)] {
            let p = p.as_ref();
            kv.opt(&format!("adaptation.{tag}.lambda"), p.map(|b| b.lambda));
            kv.opt(&format!("adaptation.{tag}.mu1_prime"), p.map(|b| b.mu1_prime));
            kv.opt(&format!("adaptation.{tag}.c_g"), p.map(|b| b.c_g));
            kv.opt(&format!("adaptation.{tag}.c_g_corrected"), p.map(|b| b.c_g_corrected));
            kv.opt(&format!("adaptation.{tag}.c_tilde_phi"), p.map(|b| b.c_tilde_phi));
            kv.opt(&format!("adaptation.{tag}.contraction"), p.map(|b| b.contraction));
            kv.opt(&format!("adaptation.{tag}.rhs"), p.map(|b| b.rhs));
            kv.opt(&format!("adaptation.{tag}.rhs_corrected"), p.map(|b| b.rhs_corrected));
        }
        for (k, v) in &self.extra {
            kv.num(k, *v);
        }
        for (i, note) in self.notes.iter().enumerate() {
            kv.text(&format!("note.{i}"), &note.replace('\n', " "));
        }
        kv.0
    }
}

/// Parses a `name = value` document into ordered pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Config(format!("line {}: expected `name = value`", i + 1)))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e300, 5e-324, 123456789.125, f64::INFINITY] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(format_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_report_marks_sections_unavailable() {
        let r = BoundReport {
            extra: vec![("mc.freq".into(), 0.95)],
            notes: vec!["precondition failed".into()],
            ..Default::default()
        };
        let pairs = parse_kv(&r.to_kv()).unwrap();
        assert!(pairs.iter().any(|(k, v)| k == "gap_bound" && v == "unavailable"));
        assert!(pairs.iter().any(|(k, v)| k == "mc.freq" && v == "0.95"));
        assert!(pairs.iter().any(|(k, _)| k == "note.0"));
    }
}

//! Flat `key = value` reports.

use std::fmt::Display;
use std::io::Write;

use crate::equilibrium::{component_names, to_vector, Equilibrium};
use crate::frames::DqPair;
use crate::mapping::MappingResult;
use crate::modes::Refs;
use crate::sim::TransientMetrics;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    /// Floats are written in shortest round-trip form, in exponent notation
    /// when very small or large.
    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let text = value.to_string();
        let text = match text.parse::<f64>() {
            Ok(x) if x != 0.0 && x.is_finite() && !(1e-4..1e6).contains(&x.abs()) => format!("{x:e}"),
            _ => text,
        };
        self.entries.push((key.into(), text));
    }

    pub fn push_dq(&mut self, key: &str, v: DqPair) {
        self.push(format!("{key}.d"), v.d);
        self.push(format!("{key}.q"), v.q);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn extend(&mut self, other: Report) {
        self.entries.extend(other.entries);
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "{k} = {v}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("report is UTF-8")
    }

    /// Parses text produced by [`Report::write`].
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

fn push_refs(r: &mut Report, key: &str, refs: &Refs) {
    match refs {
        Refs::Gfl(g) => r.push_dq(&format!("{key}.i_ref"), g.i_ref),
        Refs::Gfm(g) => {
            r.push_dq(&format!("{key}.v_ref"), g.v_ref);
            r.push(format!("{key}.p_ref"), g.p_ref);
        }
    }
}

/// Operating point in the controller frame: LCL states, inputs, and the
/// controller states, plus the linear stability summary.
pub fn equilibrium_entries(prefix: &str, eq: &Equilibrium, params: &crate::SystemParams) -> Report {
    let mut r = Report::new();
    let plant = eq.controller_frame_plant();
    r.push(format!("{prefix}.mode"), eq.mode());
    r.push_dq(&format!("{prefix}.v_c"), plant.v_c);
    r.push_dq(&format!("{prefix}.i_l"), plant.i_l);
    r.push_dq(&format!("{prefix}.i_g"), plant.i_g);
    r.push(format!("{prefix}.v_c_magnitude"), plant.v_c.norm());
    push_refs(&mut r, &format!("{prefix}.refs"), &eq.refs);
    r.push_dq(&format!("{prefix}.v_i_cmd"), eq.command(params));
    r.push(format!("{prefix}.v_g"), params.v_g_pu());
    for (name, v) in component_names(eq.mode()).iter().zip(to_vector(&eq.state)).skip(6) {
        r.push(format!("{prefix}.state.{name}"), v);
    }
    r.push(format!("{prefix}.newton_iterations"), eq.iterations);
    r.push(format!("{prefix}.residual_norm"), eq.residual_norm);
    r.push(format!("{prefix}.max_real_eigenvalue"), eq.max_real_eigenvalue());
    r.push(format!("{prefix}.stable"), eq.stable);
    r
}

/// Mapping outputs: phase injection, target references and integrator
/// initial values.
pub fn mapping_entries(prefix: &str, m: &MappingResult) -> Report {
    let mut r = Report::new();
    r.push(format!("{prefix}.theta0"), m.theta0);
    r.push(format!("{prefix}.theta"), m.theta);
    push_refs(&mut r, &format!("{prefix}.refs"), &m.refs);
    r.push_dq(
        &format!("{prefix}.current_pi_init"),
        DqPair::new(m.pi_inits.cur_d.accum, m.pi_inits.cur_q.accum),
    );
    if let Some((d, q)) = m.pi_inits.volt {
        r.push_dq(&format!("{prefix}.voltage_pi_init"), DqPair::new(d.accum, q.accum));
    }
    r
}

pub fn metrics_entries(prefix: &str, m: &TransientMetrics) -> Report {
    let mut r = Report::new();
    r.push(format!("{prefix}.window"), m.window);
    for (name, s) in &m.signals {
        r.push(format!("{prefix}.{name}.max_deviation"), s.max_deviation);
        r.push(format!("{prefix}.{name}.settling_time"), s.settling_time);
        r.push(format!("{prefix}.{name}.overshoot"), s.overshoot);
    }
    r.push(format!("{prefix}.max_plant_deviation"), m.max_plant_deviation());
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = Report::new();
        r.push("a.b", 1.5);
        r.push_dq("x", DqPair::new(0.25, -1e-12));
        r.push("name", "gfl_to_gfm");
        assert_eq!(Report::parse(&r.to_text()), r);
        assert_eq!(r.get("x.q"), Some("-1e-12"));
        assert_eq!(r.get("a.b"), Some("1.5"));
    }
}

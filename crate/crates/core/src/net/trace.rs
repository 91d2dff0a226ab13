//! Delimited trace export: one row per recorded slot, `t, R1..RM, G1..GM`.

use std::io::Write;

use crate::chain::Trajectory;

use super::{NetError, NetworkState};

pub fn write_trace<W: Write>(out: W, trajectory: &Trajectory<NetworkState>) -> Result<(), NetError> {
    let io = |e: csv::Error| NetError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    let m = trajectory.states.first().map_or(0, |s| s.r.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("R{i}")));
    header.extend((1..=m).map(|i| format!("G{i}")));
    w.write_record(&header).map_err(io)?;
    for s in &trajectory.states {
        let row = std::iter::once(s.t)
            .chain(s.r.iter().copied())
            .chain(s.g.iter().copied())
            .map(|v| v.to_string());
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| NetError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{trajectory, RandomStream};
    use crate::net::{ArrivalLaw, Mode, Network, NetworkConfig};

    #[test]
    fn rows_follow_thinning() {
        let cfg = NetworkConfig::new(2, 0.3, 0.4, 0.1, Mode::Coordinator, false, ArrivalLaw::Poisson)
            .unwrap();
        let net = Network::new(cfg).unwrap();
        let mut rng = RandomStream::new(1, 0);
        let tr = trajectory(&net, NetworkState::empty(2), 10, 5, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,R1,R2,G1,G2");
        assert_eq!(lines.len(), 1 + tr.states.len());
        assert!(lines[1].starts_with("1,"));
    }
}

//! Gnuplot scripts for BG profiles of rollout CSVs.

use std::fmt::Write as _;

/// One curve: a rollout CSV as written by `RolloutRecord::write_csv` and its label.
#[derive(Debug, Clone)]
pub struct PlotSeries {
    pub csv: String,
    pub label: String,
}

/// A gnuplot script drawing true BG against time in hours, with the
/// euglycemic band shaded. Output goes to `png`.
pub fn bg_profile_script(series: &[PlotSeries], png: &str, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1000,500");
    let _ = writeln!(s, "set output '{}'", escape(png));
    let _ = writeln!(s, "set title '{}'", escape(title));
    let _ = writeln!(s, "set xlabel 'time [h]'");
    let _ = writeln!(s, "set ylabel 'BG [mg/dL]'");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set object 1 rect from graph 0, first 70 to graph 1, first 180 fc rgb '#e8f4e8' fs solid behind noborder");
    let plots: Vec<String> = series
        .iter()
        .map(|p| format!("'{}' using ($1/60):2 skip 1 with lines title '{}'", escape(&p.csv), escape(&p.label)))
        .collect();
    if plots.is_empty() {
        let _ = writeln!(s, "plot 70 notitle, 180 notitle");
    } else {
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('\'', "''")
}

//! Standalone gnuplot scripts that read the CSV outputs of a run directory.

const PREAMBLE: &str = "set datafile separator ','\nset key autotitle columnhead\nset grid\n";

fn terminal(name: &str) -> String {
    format!("set terminal pngcairo size 900,600\nset output '{name}.png'\n")
}

/// Accepted and rejected step sizes over time.
pub fn steps() -> String {
    format!(
        "{PREAMBLE}{}set logscale y\nset xlabel 't'\nset ylabel 'k'\n\
         plot 'history.csv' using 2:(strcol(4) eq 'true' ? $3 : 1/0) with linespoints pt 7 ps 0.4 title 'accepted', \\\n     \
         '' using 2:(strcol(4) eq 'false' ? $3 : 1/0) with points pt 2 title 'rejected'\n",
        terminal("steps")
    )
}

/// Norm of every velocity mode over time.
pub fn mode_norms(n_modes: usize) -> String {
    format!(
        "{PREAMBLE}{}set logscale y\nset xlabel 't'\nset ylabel 'coefficient norm'\nset key outside right\n\
         plot for [k=2:{}] 'mode_norms.csv' using 1:k with lines\n",
        terminal("mode_norms"),
        n_modes + 1
    )
}

/// Mean with a one-standard-deviation band per probe and component.
pub fn probe_moments(n_probes: usize) -> String {
    let mut s = format!("{PREAMBLE}{}set xlabel 't'\nset ylabel 'velocity'\nset key outside right\nplot ", terminal("probe_moments"));
    let mut parts = Vec::new();
    for p in 0..n_probes {
        for (c, name) in ["x", "y"].iter().enumerate() {
            let filter = format!("($2 == {p} && $3 == {c})");
            parts.push(format!(
                "'probe_moments.csv' using 1:({filter} ? $4 : 1/0):({filter} ? sqrt($5) : 1/0) with yerrorlines title 'probe {p} u_{name}'"
            ));
        }
    }
    s.push_str(&parts.join(", \\\n     "));
    s.push('\n');
    s
}

/// One panel per density file.
pub fn densities(files: &[String]) -> String {
    let mut s = format!("{PREAMBLE}set terminal pngcairo size 700,500\nset xlabel 'value'\nset ylabel 'density'\nunset key\n");
    for f in files {
        let stem = f.trim_end_matches(".csv");
        s.push_str(&format!("set output 'pdf/{stem}.png'\nset title '{stem}'\nplot 'pdf/{f}' using 1:2 with lines lw 2\n"));
    }
    s
}

/// Probe means of the three methods with the Monte Carlo error band.
pub fn comparison() -> String {
    format!(
        "{PREAMBLE}{}set xlabel 't'\nset ylabel 'mean'\n\
         plot 'comparison.csv' using 1:4 with points pt 6 title 'SG', \\\n     \
         '' using 1:5 with points pt 2 title 'SC', \\\n     \
         '' using 1:6:(3*$7) with yerrorbars pt 4 title 'MC (3 std. errors)'\n",
        terminal("comparison")
    )
}

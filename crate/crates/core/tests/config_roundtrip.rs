use cellflow_core::config::RunConfig;
use proptest::prelude::*;

fn num() -> impl Strategy<Value = f64> {
    0.001f64..10.0
}

fn univariate(name: &'static str) -> impl Strategy<Value = String> {
    prop_oneof![
        num().prop_map(move |c| format!("rates.{name}.kind = constant\nrates.{name}.params = {c}\n")),
        (num(), num(), 1.0f64..4.0).prop_map(move |(a, h, e)| format!(
            "rates.{name}.kind = hill\nrates.{name}.params = {a}, {h}, {e}\n"
        )),
        prop::collection::vec(num(), 1..4).prop_map(move |c| format!(
            "rates.{name}.kind = polynomial\nrates.{name}.params = {}\n",
            c.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
        )),
        (num(), num()).prop_map(move |(a, b)| format!(
            "rates.{name}.kind = tabulated\nrates.{name}.table_m = 0, 1\nrates.{name}.table_v = {a}, {b}\n"
        )),
    ]
}

fn bivariate(name: &'static str) -> impl Strategy<Value = String> {
    prop_oneof![
        (num(), 1.0f64..4.0).prop_map(move |(a, e)| format!(
            "rates.{name}.kind = hill\nrates.{name}.params = {a}, {e}\n"
        )),
        num().prop_map(move |a| format!(
            "rates.{name}.kind = saturating\nrates.{name}.params = {a}\n"
        )),
        Just(format!("rates.{name}.kind = zero\n")),
    ]
}

fn profile(name: &'static str) -> impl Strategy<Value = String> {
    (0.0f64..0.9, 0usize..3, 0.0f64..2.0).prop_map(move |(a, s, d)| {
        let shape = ["constant", "parabolic", "cosine"][s];
        format!(
            "init.{name}.amplitude = {a}\ninit.{name}.shape = {shape}\ninit.{name}.decay = {d}\n"
        )
    })
}

prop_compose! {
    fn config_text()(
        tau_hi in 0.1f64..2.0,
        lo_frac in 0.1f64..0.9,
        hops in 2.0f64..20.0,
        n_m in 3usize..300,
        n_t in 3usize..600,
        toll in 1e-12f64..1e-4,
        seed in any::<u64>(),
        plus in any::<bool>(),
        scales in any::<bool>(),
        slope in 0.01f64..1.0,
        v_scale in 0.0f64..5.0,
        u_scale in 0.0f64..5.0,
        delta in univariate("delta"),
        gamma in univariate("gamma"),
        sigma in univariate("sigma"),
        beta in bivariate("beta"),
        alpha in bivariate("alpha"),
        phi in profile("phi"),
        psi in profile("psi"),
        omega in profile("omega"),
    ) -> String {
        format!(
            "model.tau_hi = {tau_hi}\nmodel.tau_lo = {}\nmodel.horizon = {}\n\
             grid.n_m = {n_m}\ngrid.n_t = {n_t}\nsolver.toll = {toll}\nsolver.seed = {seed}\n\
             switches.fc_sign_convention = {}\nswitches.omega_scales_integral_term = {scales}\n\
             rates.g.kind = linear\nrates.g.params = {slope}\n\
             rates.v.kind = parabolic\nrates.v.params = {v_scale}\n\
             rates.u.kind = parabolic\nrates.u.params = {u_scale}, 1\n\
             {delta}{gamma}{sigma}{beta}{alpha}{phi}{psi}{omega}",
            lo_frac * tau_hi,
            hops * tau_hi,
            if plus { "plus" } else { "minus" },
        )
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn canonical_text_round_trips(text in config_text()) {
        let cfg = RunConfig::parse(&text).unwrap();
        let again = RunConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.to_text(), again.to_text());
    }
}

#[test]
fn unknown_kind_is_rejected() {
    let text = "grid.n_m = 3\ngrid.n_t = 3\nrates.delta.kind = wavy\n";
    let err = RunConfig::parse(text).unwrap_err().to_string();
    assert!(err.contains("rates.delta.kind"), "{err}");
}

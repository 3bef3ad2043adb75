"""Committed pass/fail tolerances for the verification suites.

Values marked "criterion" are fixed by the acceptance statement; values
marked "pilot" were frozen from pilot oracle runs (date, seeds, and the
observed values are noted) and are not to be loosened to make a run pass.
"""

TOLERANCES = {
    # -- heat identities (criterion)
    "mass_identity_max": 1e-6,
    "duhamel_residual_max": 1e-5,
    "stepper_agreement_max": 1e-5,
    # Volterra grid step giving ~4e-6 agreement vs RK4 (pilot 2026-08-10)
    "volterra_h": 0.01,
    # -- profile identity (criterion)
    "profile_closed_vs_integral": 1e-8,
    # -- growth (criterion bracket; trend at T=1e4 vs 1e3)
    "growth_ratio_bracket": (0.75, 1.25),
    # -- shape (pilot 2026-08-10, seeds 101/streams 0..49, T=1e4:
    #    ratios 0.636 / 0.669 / 0.650 for the three test functions; the
    #    finite-t deficit tracks R(t)/asym_R(t) ~ 0.70 at this scale)
    "shape_ratio_bracket": (0.6, 1.4),
    # -- tuned Poisson system (criterion)
    "poisson_mean_z": 4.0,
    "poisson_varmean_bracket": (0.9, 1.1),
    # -- vacancy moments (criterion: bound within MC error; trends)
    "vacancy_bound_z": 4.0,
    # -- upper coupling (criterion)
    "ks_alpha": 0.01,
    "hat_thinning_z": 4.0,
    # -- two-walk couplings (criterion)
    "lower_block_constant_rel": 0.25,
    # -- correlations (criterion)
    "series_identity_atol": 1e-12,
    "mc_agreement_z": 4.0,
    # double-precision allowance when the analytic remainder bound is
    # smaller than roundoff in the compared quantities
    "remainder_fp_slack": 1e-15,
    # -- statistical gate for chi-square checks (criterion)
    "chi2_alpha": 0.01,
}

"""Prints a one-line verdict per acceptance criterion after the run."""

ACCEPTANCE_FILE = "test_acceptance.py"

CRITERIA = [
    ("test_encrypted_decision_matches_oracle_across_metrics",
     "encrypted decision == plaintext oracle: 1000 instances per metric, n in {2,8,32,64}, entries in [-256,256], zero tolerance, under 5 minutes"),
    ("test_extension_dot_products_carry_scaled_comparison",
     "padded-vector dot products equal the scaled comparison exactly, 1000 instances per metric, scale factors exposed"),
    ("test_trace_unchanged_by_similarity_transform",
     "Tr(M A M^-1) == Tr(A) exactly for 200 random pairs, dims 2-32"),
    ("test_threshold_boundary_accepts",
     "exact-boundary instances (comparison lands on zero) accept for all three metrics and through the auth service"),
    ("test_fresh_encryptions_distinct_and_magnitude_varies",
     "100 encryptions of one template are pairwise distinct; result sign constant, magnitude varying, across fresh scale factors"),
    ("test_registration_attack_blocked_only_by_scale_factors",
     "known-template recovery is exact with result-disguising factors off; relative error > 10% in >= 95% of 1000 trials with them on"),
    ("test_distinguishers_null_and_backdoor_exact",
     "all four distinguishers have advantage CI containing 0 at 10^4 trials, n=8; bit-reading backdoor scores advantage 1/2 exactly"),
    ("test_cost_trends_decrypt_scaling_and_token_split",
     "decrypt time ratio t(2n)/t(n) in [3,6] over n in {64,128,256}; token online/total in [0.3,0.7] at n=128"),
    ("test_service_wire_agreement_blindness_and_restart",
     "wire enroll/auth matches in-process decisions on 500 instances; server files contain no key/template substring; outcomes survive restart"),
    ("test_encrypted_search_matches_plaintext_filters",
     "encrypted search equals plaintext filters on a 100-file corpus (overlap) and 50 records (weighted sum)"),
]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    # worst phase wins: a passed call with a broken teardown is not a pass
    for key in ("error", "failed", "skipped", "passed"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if f"{ACCEPTANCE_FILE}::" not in nodeid:
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            outcomes.setdefault(name, key)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    labels = {"passed": "PASS", "failed": "FAIL", "error": "FAIL", "skipped": "SKIP"}
    for name, description in CRITERIA:
        label = labels.get(outcomes.get(name), "NOT RUN")
        terminalreporter.write_line(f"{label:8s}{description}")

// Acceptance suite: populated alongside the harness.

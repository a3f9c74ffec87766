"""Platform for click-contingent attention experiments.

Participants explore blurred stimuli by clicking (or moving the mouse) to
reveal sharp circular regions; the resulting click logs are analyzed against
eye-fixation data via attention maps, correlation and scanpath-saliency
metrics, inter-observer consistency, participant-limit extrapolation, and
element-importance ranking.
"""

__version__ = "0.1.0"

"""SDN intrusion detection and treatment: controller, switch, detector and scenarios."""

__version__ = "0.1.0"

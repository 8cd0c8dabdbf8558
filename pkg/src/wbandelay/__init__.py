"""Delay simulation and closed-form CSMA/CA delay model for wireless body area
network traffic relayed over ZigBee and a WLAN, WiMAX or UMTS backhaul."""

__version__ = "0.1.0"

"""Biometric instruments: VR, FR, KD verification and FRA, VRA anti-spoofing."""

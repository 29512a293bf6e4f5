# Biometric Trust Server Application

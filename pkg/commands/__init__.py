# Command handlers registered by cli.py

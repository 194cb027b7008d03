"""Gain-index learning for restless multi-armed bandits."""

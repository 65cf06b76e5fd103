"""oblivinfer: a DNN inference engine whose memory-access pattern is a
first-class, recordable object.

The engine runs small feed-forward networks in two interchangeable execution
modes: a Leaky mode whose data-dependent branches (activations, pooling,
argmax) are visible in the simulated access trace, and an Oblivious mode
built on branchless selection whose trace is independent of the input.
On top of that sit a channel model (trace recording at several attacker
granularities), a label-recovery attack that trains a classifier on branch
features extracted from Leaky traces, and an equivalence checker that
verifies the Oblivious mode's defense claim trace-for-trace.
"""

__version__ = "0.1.0"

from vsc_impedance.cli import main

main()
